//! `fisher-gp`: generate density datasets, fit and evaluate density-indexed
//! Gaussian-process models.

mod commands;
mod config;
mod error;
mod fit;
mod table;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use config::{FitArgs, GlobalArgs, SplitArgs};
use fit::Task;

#[derive(Parser, Debug)]
#[command(name = "fisher-gp", version, about = "Gaussian processes indexed by probability densities")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset as CSV plus a JSON sidecar.
    Gen(GenArgs),
    /// Fit a model and write it as JSON.
    Fit(FitCmd),
    /// Predict at new densities with a saved model.
    Predict(PredictCmd),
    /// Score a saved model, or repeat split/fit/score on one dataset.
    Eval(EvalCmd),
    /// Fréchet mean of a set of densities under the Fisher-Rao metric.
    FrechetMean(FrechetCmd),
    /// Gradient and geometry diagnostics.
    Diagnose(DiagnoseCmd),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
enum DatasetKind {
    Tfb,
    Beta,
    Invgamma,
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(value_enum)]
    kind: DatasetKind,
    /// Number of observations; split evenly between classes for classification.
    #[arg(long)]
    n: Option<usize>,
    /// Class separation of the classification generators.
    #[arg(long)]
    shift: Option<f64>,
    /// Noise standard deviation of the generator.
    #[arg(long)]
    noise_sd: Option<f64>,
    /// Output prefix; writes `<out>.csv` and `<out>.json`.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct FitCmd {
    #[arg(value_enum)]
    task: Task,
    /// Training CSV whose last column is the response.
    #[arg(long)]
    data: PathBuf,
    /// Model file to write.
    #[arg(long)]
    model: PathBuf,
    /// JSON fit report.
    #[arg(long)]
    report: Option<PathBuf>,
    /// CSV trace of the HMC chain.
    #[arg(long)]
    chain: Option<PathBuf>,
    #[command(flatten)]
    fit: FitArgs,
}

#[derive(Args, Debug)]
struct PredictCmd {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// The input CSV has a trailing response column, which is ignored.
    #[arg(long)]
    with_response: bool,
    #[arg(long, short)]
    out: PathBuf,
    #[command(flatten)]
    fit: FitArgs,
}

#[derive(Args, Debug)]
struct EvalCmd {
    /// Saved model to score; omit to run repeated splits on `--data`.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Test CSV, or the full dataset in repetition mode.
    #[arg(long)]
    data: PathBuf,
    /// Required in repetition mode; checked against the model otherwise.
    #[arg(long, value_enum)]
    task: Option<Task>,
    /// JSON metrics report.
    #[arg(long)]
    report: Option<PathBuf>,
    #[command(flatten)]
    split: SplitArgs,
    #[command(flatten)]
    fit: FitArgs,
}

#[derive(Args, Debug)]
struct FrechetCmd {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    with_response: bool,
    #[arg(long, short)]
    out: PathBuf,
    #[arg(long, default_value_t = fisher_gp::geometry::FRECHET_MAX_ITER)]
    iterations: usize,
    #[arg(long, default_value_t = fisher_gp::geometry::FRECHET_TOL)]
    tol: f64,
    #[command(flatten)]
    fit: FitArgs,
}

#[derive(Args, Debug)]
struct DiagnoseCmd {
    #[command(subcommand)]
    which: Diagnostic,
}

#[derive(Subcommand, Debug)]
enum Diagnostic {
    /// Compare the analytic NLML gradient with central differences.
    GradientCheck(GradCheckCmd),
    /// Chord-versus-geodesic defect of the tangent-space embedding.
    Isometry(IsometryCmd),
}

#[derive(Args, Debug)]
struct GradCheckCmd {
    #[arg(value_enum)]
    task: Task,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    delta2: f64,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    /// Relative finite-difference step.
    #[arg(long, default_value_t = 1e-5)]
    step: f64,
    #[arg(long)]
    report: Option<PathBuf>,
    #[command(flatten)]
    fit: FitArgs,
}

#[derive(Args, Debug)]
struct IsometryCmd {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    with_response: bool,
    #[arg(long)]
    report: Option<PathBuf>,
    #[command(flatten)]
    fit: FitArgs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => commands::gen(&cli.global, &a),
        Command::Fit(a) => commands::fit(&cli.global, &a),
        Command::Predict(a) => commands::predict(&cli.global, &a),
        Command::Eval(a) => commands::eval(&cli.global, &a),
        Command::FrechetMean(a) => commands::frechet(&cli.global, &a),
        Command::Diagnose(d) => match d.which {
            Diagnostic::GradientCheck(a) => commands::gradient_check(&cli.global, &a),
            Diagnostic::Isometry(a) => commands::isometry(&cli.global, &a),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fisher-gp: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

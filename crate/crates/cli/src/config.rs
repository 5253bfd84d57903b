use std::path::Path;

use clap::{Args, ValueEnum};
use fisher_gp::datasets::{BetaClassConfig, InvGammaClassConfig, TfbConfig};
use fisher_gp::density::DEFAULT_GRID_SIZE;
use fisher_gp::inference::{GdConfig, HMCConfig, PriorConfig, DEFAULT_FOLDS};
use fisher_gp::io::RowKind;
use fisher_gp::regression::DEFAULT_NOISE_VAR;
use fisher_gp::rng::derive_seed;
use fisher_gp::Nu;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Grad,
    Hmc,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Input {
    Densities,
    Samples,
}

impl From<Input> for RowKind {
    fn from(i: Input) -> Self {
        match i {
            Input::Densities => RowKind::Densities,
            Input::Samples => RowKind::Samples,
        }
    }
}

/// Every setting a command may consult, after merging defaults, the config
/// file and command-line flags.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub grid_size: usize,
    pub input: Input,
    /// Observation noise variance `γ²` for regression.
    pub noise_var: f64,
    pub nu: Vec<Nu>,
    pub folds: usize,
    pub optimizer: Optimizer,
    pub train_frac: f64,
    pub repetitions: usize,
    pub prior: PriorConfig,
    pub gd: GdConfig,
    pub hmc: HMCConfig,
    pub tfb: TfbConfig,
    pub beta: BetaClassConfig,
    pub invgamma: InvGammaClassConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            grid_size: DEFAULT_GRID_SIZE,
            input: Input::Densities,
            noise_var: DEFAULT_NOISE_VAR,
            nu: Nu::ALL.to_vec(),
            folds: DEFAULT_FOLDS,
            optimizer: Optimizer::Grad,
            train_frac: 0.75,
            repetitions: 1,
            prior: PriorConfig::default(),
            gd: GdConfig::default(),
            hmc: HMCConfig::default(),
            tfb: TfbConfig::default(),
            beta: BetaClassConfig::default(),
            invgamma: InvGammaClassConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Usage(m));
        if !(self.train_frac > 0.0 && self.train_frac < 1.0) {
            return bad(format!("train fraction {} must lie in (0, 1)", self.train_frac));
        }
        if self.repetitions == 0 {
            return bad("repetitions must be at least 1".into());
        }
        if self.nu.is_empty() {
            return bad("at least one nu candidate is required".into());
        }
        if !(self.noise_var > 0.0 && self.noise_var.is_finite()) {
            return bad(format!("noise variance {} must be positive", self.noise_var));
        }
        if self.grid_size < fisher_gp::density::MIN_GRID_SIZE {
            return bad(format!("grid size {} is too small", self.grid_size));
        }
        self.prior.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        self.hmc.validate().map_err(|e| CliError::Usage(e.to_string()))
    }
}

/// Global flags shared by all subcommands.
#[derive(Args, Debug, Clone)]
pub struct GlobalArgs {
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub grid_size: Option<usize>,
    /// TOML file with settings; flags given on the command line take precedence.
    #[arg(long, global = true)]
    pub config: Option<std::path::PathBuf>,
}

/// Model-fitting flags, each overriding the matching config entry.
#[derive(Args, Debug, Clone, Default)]
pub struct FitArgs {
    /// How each CSV row is read.
    #[arg(long, value_enum)]
    pub input: Option<Input>,
    #[arg(long)]
    pub noise_var: Option<f64>,
    /// Candidate smoothness values, e.g. `--nu 1.5,5/2`.
    #[arg(long, value_delimiter = ',')]
    pub nu: Option<Vec<Nu>>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long, value_enum)]
    pub optimizer: Option<Optimizer>,
    #[arg(long)]
    pub b_delta2: Option<f64>,
    #[arg(long)]
    pub a_alpha: Option<f64>,
    #[arg(long)]
    pub b_alpha: Option<f64>,
    #[arg(long)]
    pub hmc_samples: Option<usize>,
    #[arg(long)]
    pub hmc_burn_in: Option<usize>,
    #[arg(long)]
    pub hmc_leapfrog: Option<usize>,
    #[arg(long)]
    pub hmc_step: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
}

/// Flags of the repeated split/fit/evaluate mode.
#[derive(Args, Debug, Clone, Default)]
pub struct SplitArgs {
    #[arg(long)]
    pub train_frac: Option<f64>,
    #[arg(long)]
    pub repetitions: Option<usize>,
}

pub fn resolve(global: &GlobalArgs, fit: &FitArgs, split: &SplitArgs) -> Result<RunConfig, CliError> {
    let mut c = RunConfig::load(global.config.as_deref())?;
    macro_rules! set {
        ($src:expr => $dst:expr) => {
            if let Some(v) = $src.clone() {
                $dst = v;
            }
        };
    }
    set!(global.seed => c.seed);
    set!(global.grid_size => c.grid_size);
    set!(fit.input => c.input);
    set!(fit.noise_var => c.noise_var);
    set!(fit.nu => c.nu);
    set!(fit.folds => c.folds);
    set!(fit.optimizer => c.optimizer);
    set!(fit.b_delta2 => c.prior.b_delta2);
    set!(fit.a_alpha => c.prior.a_alpha);
    set!(fit.b_alpha => c.prior.b_alpha);
    set!(fit.hmc_samples => c.hmc.n_samples);
    set!(fit.hmc_burn_in => c.hmc.burn_in);
    set!(fit.hmc_leapfrog => c.hmc.n_leapfrog);
    set!(fit.max_iter => c.gd.max_iter);
    set!(split.train_frac => c.train_frac);
    set!(split.repetitions => c.repetitions);
    if fit.hmc_step.is_some() {
        c.hmc.step_size = fit.hmc_step;
    }
    c.hmc.seed = derive_seed(c.seed, 3);
    c.tfb.grid_size = c.grid_size;
    c.beta.grid_size = c.grid_size;
    c.invgamma.grid_size = c.grid_size;
    c.validate()?;
    Ok(c)
}

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use fisher_gp::classification::{nlml_classification, nlml_classification_grad};
use fisher_gp::datasets::{gen_classification_beta, gen_classification_invgamma, gen_regression_tfb, split_indices};
use fisher_gp::geometry::{frechet_mean, geodesic_distance, isometry_defect, to_sphere};
use fisher_gp::inference::write_chain_csv;
use fisher_gp::io::{read_dataset_csv, write_dataset_csv, DatasetRows, Model, FORMAT_VERSION};
use fisher_gp::metrics::mean_std;
use fisher_gp::regression::{nlml_regression, nlml_regression_grad};
use fisher_gp::rng::derive_seed;
use fisher_gp::{DensityOnGrid, MaternParams};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::{resolve, FitArgs, GlobalArgs, RunConfig, SplitArgs};
use crate::error::CliError;
use crate::fit::{evaluate, fit_model, FitSummary, Metrics, Task, TrainSet};
use crate::table::{num, opt, render};
use crate::{DatasetKind, EvalCmd, FitCmd, FrechetCmd, GenArgs, GradCheckCmd, IsometryCmd, PredictCmd};

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Data(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

fn read_rows(path: &Path, cfg: &RunConfig, has_response: bool) -> Result<DatasetRows, CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    read_dataset_csv(file, cfg.input.into(), cfg.grid_size, has_response).map_err(|e| CliError::io(path, e))
}

fn load_model(path: &Path) -> Result<Model, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Model::from_json(&text).map_err(|e| match CliError::from(e) {
        CliError::Data(m) => CliError::io(path, m),
        other => other,
    })
}

fn check_grid(model: &Model, rows: &DatasetRows) -> Result<(), CliError> {
    let m = rows.densities[0].grid_size();
    if m != model.grid_size() {
        return Err(CliError::Data(format!(
            "data has {m} grid points but the model was fitted on {}",
            model.grid_size()
        )));
    }
    Ok(())
}

fn print(text: &str) {
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(text.as_bytes());
}

pub fn gen(global: &GlobalArgs, a: &GenArgs) -> Result<(), CliError> {
    let cfg = resolve(global, &FitArgs::default(), &SplitArgs::default())?;
    let per_class = |n: usize| {
        if n % 2 == 1 {
            Err(CliError::Usage(format!("n = {n} must be even for a two-class dataset")))
        } else {
            Ok(n / 2)
        }
    };
    let (densities, response, name, generator) = match a.kind {
        DatasetKind::Tfb => {
            if a.shift.is_some() {
                return Err(CliError::Usage("--shift applies to the classification datasets only".into()));
            }
            let mut c = cfg.tfb.clone();
            c.n = a.n.unwrap_or(c.n);
            c.noise_sd = a.noise_sd.unwrap_or(c.noise_sd);
            let d = gen_regression_tfb(&c, cfg.seed)?;
            (d.densities, d.targets, "target", serde_json::to_value(c))
        }
        DatasetKind::Beta => {
            let mut c = cfg.beta.clone();
            c.n_per_class = a.n.map(per_class).transpose()?.unwrap_or(c.n_per_class);
            c.shift = a.shift.unwrap_or(c.shift);
            c.noise_sd = a.noise_sd.unwrap_or(c.noise_sd);
            let d = gen_classification_beta(&c, cfg.seed)?;
            (d.densities, d.labels, "label", serde_json::to_value(c))
        }
        DatasetKind::Invgamma => {
            let mut c = cfg.invgamma.clone();
            c.n_per_class = a.n.map(per_class).transpose()?.unwrap_or(c.n_per_class);
            c.shift = a.shift.unwrap_or(c.shift);
            c.noise_sd = a.noise_sd.unwrap_or(c.noise_sd);
            let d = gen_classification_invgamma(&c, cfg.seed)?;
            (d.densities, d.labels, "label", serde_json::to_value(c))
        }
    };
    let csv_path = a.out.with_extension("csv");
    let json_path = a.out.with_extension("json");
    let mut w = create(&csv_path)?;
    write_dataset_csv(&mut w, &densities, Some((name, &response))).map_err(|e| CliError::io(&csv_path, e))?;
    let sidecar = json!({
        "format_version": FORMAT_VERSION,
        "kind": a.kind,
        "seed": cfg.seed,
        "grid_size": cfg.grid_size,
        "n": densities.len(),
        "response_column": name,
        "generator": generator.map_err(|e| CliError::Data(e.to_string()))?,
    });
    write_json(&json_path, &sidecar)?;
    print(&format!(
        "wrote {} observations to {} and {}\n",
        densities.len(),
        csv_path.display(),
        json_path.display()
    ));
    Ok(())
}

fn summary_table(s: &FitSummary) -> String {
    let mut rows = vec![
        vec!["task".into(), format!("{:?}", s.task).to_lowercase()],
        vec!["n_train".into(), s.n_train.to_string()],
        vec!["optimizer".into(), format!("{:?}", s.optimizer).to_lowercase()],
        vec!["nu".into(), s.nu.to_string()],
        vec!["delta2".into(), num(s.delta2)],
        vec!["alpha".into(), num(s.alpha)],
        vec!["initial NLML".into(), num(s.initial_nlml)],
        vec!["final NLML".into(), num(s.final_nlml)],
    ];
    if let Some(cv) = &s.cv {
        for (nu, score) in &cv.scores {
            rows.push(vec![format!("cv score nu={nu}"), opt(*score)]);
        }
    }
    if let Some(i) = s.iterations {
        rows.push(vec!["iterations".into(), i.to_string()]);
    }
    if let Some(c) = s.converged {
        rows.push(vec!["converged".into(), c.to_string()]);
    }
    if let Some(r) = s.accept_rate {
        rows.push(vec!["acceptance rate".into(), num(r)]);
    }
    if let Some(st) = s.step_size {
        rows.push(vec!["step size".into(), num(st)]);
    }
    if let Some(j) = s.jitter_used {
        rows.push(vec!["jitter used".into(), num(j)]);
    }
    render(&["quantity", "value"], &rows)
}

pub fn fit(global: &GlobalArgs, a: &FitCmd) -> Result<(), CliError> {
    let cfg = resolve(global, &a.fit, &SplitArgs::default())?;
    let rows = read_rows(&a.data, &cfg, true)?;
    let start = Instant::now();
    let train = TrainSet::new(a.task, &rows.densities, rows.responses.unwrap_or_default(), &cfg)?;
    let (model, summary, chain) = fit_model(&train, &cfg, cfg.seed)?;
    let wall = start.elapsed().as_secs_f64();
    let text = model.to_json()?;
    std::fs::write(&a.model, text + "\n").map_err(|e| CliError::io(&a.model, e))?;
    if let (Some(path), Some(chain)) = (&a.chain, &chain) {
        let mut w = create(path)?;
        write_chain_csv(chain, &mut w)
            .and_then(|_| w.flush())
            .map_err(|e| CliError::io(path, e))?;
    }
    if let Some(path) = &a.report {
        write_json(
            path,
            &json!({
                "config": cfg,
                "data": a.data,
                "model": a.model,
                "fit": summary,
                "wall_seconds": wall,
            }),
        )?;
    }
    print(&summary_table(&summary));
    print(&format!("wall time {wall:.2}s\n"));
    Ok(())
}

pub fn predict(global: &GlobalArgs, a: &PredictCmd) -> Result<(), CliError> {
    let cfg = resolve(global, &a.fit, &SplitArgs::default())?;
    let model = load_model(&a.model)?;
    let rows = read_rows(&a.data, &cfg, a.with_response)?;
    check_grid(&model, &rows)?;
    let mut w = create(&a.out)?;
    let io = |e: std::io::Error| CliError::io(&a.out, e);
    match &model {
        Model::Regression(m) => {
            writeln!(w, "mean,variance").map_err(io)?;
            for p in &rows.densities {
                let r = m.predict(p)?;
                writeln!(w, "{},{}", r.mean, r.variance).map_err(io)?;
            }
        }
        Model::Classification(s) => {
            writeln!(w, "latent_mean,latent_var,prob_plus,label").map_err(io)?;
            for p in &rows.densities {
                let r = s.predict(p)?;
                writeln!(w, "{},{},{},{}", r.latent_mean, r.latent_var, r.prob_plus, r.label()).map_err(io)?;
            }
        }
    }
    w.flush().map_err(io)?;
    print(&format!("wrote {} predictions to {}\n", rows.densities.len(), a.out.display()));
    Ok(())
}

#[derive(Serialize)]
struct RepetitionRow {
    repetition: usize,
    seed: u64,
    n_train: usize,
    n_test: usize,
    nu: f64,
    delta2: f64,
    alpha: f64,
    #[serde(flatten)]
    metrics: Metrics,
}

#[derive(Serialize)]
struct MeanStd {
    mean: f64,
    /// `None` for a single repetition.
    std: Option<f64>,
}

fn subset(d: &[DensityOnGrid], y: &[f64], idx: &[usize]) -> (Vec<DensityOnGrid>, Vec<f64>) {
    (idx.iter().map(|&i| d[i].clone()).collect(), idx.iter().map(|&i| y[i]).collect())
}

fn repetition(task: Task, rows: &DatasetRows, y: &[f64], cfg: &RunConfig, r: usize) -> Result<RepetitionRow, CliError> {
    let seed = derive_seed(cfg.seed, r as u64);
    let (tr, te) = split_indices(y.len(), cfg.train_frac, seed)?;
    let (d_tr, y_tr) = subset(&rows.densities, y, &tr);
    let (d_te, y_te) = subset(&rows.densities, y, &te);
    let train = TrainSet::new(task, &d_tr, y_tr, cfg)?;
    let (model, summary, _) = fit_model(&train, cfg, seed)?;
    Ok(RepetitionRow {
        repetition: r,
        seed,
        n_train: tr.len(),
        n_test: te.len(),
        nu: summary.nu,
        delta2: summary.delta2,
        alpha: summary.alpha,
        metrics: evaluate(&model, &d_te, &y_te)?,
    })
}

fn metric_columns(task: Task) -> Vec<(&'static str, fn(&Metrics) -> Option<f64>)> {
    match task {
        Task::Regress => vec![("rmse", |m| m.rmse), ("nlml", |m| Some(m.nlml))],
        Task::Classify => vec![
            ("accuracy", |m| m.accuracy),
            ("auc", |m| m.auc),
            ("nlml", |m| Some(m.nlml)),
        ],
    }
}

pub fn eval(global: &GlobalArgs, a: &EvalCmd) -> Result<(), CliError> {
    let cfg = resolve(global, &a.fit, &a.split)?;
    match &a.model {
        Some(path) => {
            if a.split.repetitions.is_some() || a.split.train_frac.is_some() {
                return Err(CliError::Usage("--repetitions and --train-frac need --data without --model".into()));
            }
            let model = load_model(path)?;
            let task = Task::of(&model);
            if a.task.is_some_and(|t| t != task) {
                return Err(CliError::Usage(format!(
                    "model {} is a {} model",
                    path.display(),
                    model.task()
                )));
            }
            let rows = read_rows(&a.data, &cfg, true)?;
            check_grid(&model, &rows)?;
            let metrics = evaluate(&model, &rows.densities, rows.responses.as_deref().unwrap_or_default())?;
            if let Some(report) = &a.report {
                write_json(
                    report,
                    &json!({"config": cfg, "model": path, "data": a.data, "task": task, "n_test": rows.densities.len(), "metrics": metrics}),
                )?;
            }
            let table: Vec<Vec<String>> = metric_columns(task)
                .into_iter()
                .map(|(name, f)| vec![name.to_string(), opt(f(&metrics))])
                .collect();
            print(&render(&["metric", "value"], &table));
            Ok(())
        }
        None => {
            let task = a
                .task
                .ok_or_else(|| CliError::Usage("--task is required without --model".into()))?;
            let rows = read_rows(&a.data, &cfg, true)?;
            let y = rows.responses.clone().unwrap_or_default();
            let results: Vec<Result<RepetitionRow, CliError>> = (0..cfg.repetitions)
                .into_par_iter()
                .map(|r| repetition(task, &rows, &y, &cfg, r))
                .collect();
            let reps = results.into_iter().collect::<Result<Vec<_>, _>>()?;
            let cols = metric_columns(task);
            let mut summary = serde_json::Map::new();
            for (name, f) in &cols {
                let v: Vec<f64> = reps.iter().filter_map(|r| f(&r.metrics)).collect();
                if v.is_empty() {
                    continue;
                }
                let (mean, std) = mean_std(&v);
                let ms = MeanStd {
                    mean,
                    std: (v.len() > 1).then_some(std),
                };
                summary.insert(name.to_string(), serde_json::to_value(ms).expect("plain numbers"));
            }
            if let Some(report) = &a.report {
                write_json(
                    report,
                    &json!({"config": cfg, "data": a.data, "task": task, "repetitions": reps, "summary": summary}),
                )?;
            }
            let mut header = vec!["rep", "nu", "delta2", "alpha"];
            header.extend(cols.iter().map(|(n, _)| *n));
            let mut table: Vec<Vec<String>> = reps
                .iter()
                .map(|r| {
                    let mut row = vec![r.repetition.to_string(), r.nu.to_string(), num(r.delta2), num(r.alpha)];
                    row.extend(cols.iter().map(|(_, f)| opt(f(&r.metrics))));
                    row
                })
                .collect();
            let mut last = vec!["mean ± std".to_string(), String::new(), String::new(), String::new()];
            for (name, _) in &cols {
                last.push(match summary.get(*name) {
                    Some(v) => {
                        let mean = v["mean"].as_f64().unwrap_or(f64::NAN);
                        match v["std"].as_f64() {
                            Some(s) => format!("{} ± {}", num(mean), num(s)),
                            None => num(mean),
                        }
                    }
                    None => "-".into(),
                });
            }
            table.push(last);
            print(&render(&header, &table));
            Ok(())
        }
    }
}

pub fn frechet(global: &GlobalArgs, a: &FrechetCmd) -> Result<(), CliError> {
    let cfg = resolve(global, &a.fit, &SplitArgs::default())?;
    let rows = read_rows(&a.data, &cfg, a.with_response)?;
    let mean = frechet_mean(&rows.densities, a.iterations, a.tol)?;
    let mut w = create(&a.out)?;
    write_dataset_csv(&mut w, std::slice::from_ref(&mean), None).map_err(|e| CliError::io(&a.out, e))?;
    let centre = to_sphere(&mean);
    let d: Vec<f64> = rows
        .densities
        .iter()
        .map(|p| geodesic_distance(&centre, &to_sphere(p)))
        .collect();
    let variance = d.iter().map(|v| v * v).sum::<f64>() / d.len() as f64;
    let max = d.iter().cloned().fold(0.0, f64::max);
    print(&render(
        &["quantity", "value"],
        &[
            vec!["n".into(), d.len().to_string()],
            vec!["Fréchet variance".into(), num(variance)],
            vec!["max distance to mean".into(), num(max)],
        ],
    ));
    Ok(())
}

#[derive(Serialize)]
struct GradRow {
    nu: f64,
    parameter: &'static str,
    analytic: f64,
    finite_difference: f64,
    rel_error: f64,
}

pub fn gradient_check(global: &GlobalArgs, a: &GradCheckCmd) -> Result<(), CliError> {
    let cfg = resolve(global, &a.fit, &SplitArgs::default())?;
    if !(a.step > 0.0 && a.step < 1.0) {
        return Err(CliError::Usage(format!("step {} must lie in (0, 1)", a.step)));
    }
    let rows = read_rows(&a.data, &cfg, true)?;
    let train = TrainSet::new(a.task, &rows.densities, rows.responses.unwrap_or_default(), &cfg)?;
    let value = |p: &MaternParams| -> Result<f64, CliError> {
        Ok(match &train {
            TrainSet::Regress(t) => nlml_regression(t, p)?,
            TrainSet::Classify(t) => nlml_classification(t, p)?,
        })
    };
    let mut out = Vec::new();
    for &nu in &cfg.nu {
        let p = MaternParams::new(a.delta2, a.alpha, nu)?;
        let g = match &train {
            TrainSet::Regress(t) => nlml_regression_grad(t, &p)?,
            TrainSet::Classify(t) => nlml_classification_grad(t, &p)?,
        };
        for (k, name) in ["delta2", "alpha"].into_iter().enumerate() {
            let x = if k == 0 { p.delta2 } else { p.alpha };
            let h = a.step * x;
            let at = |v: f64| {
                let mut q = p;
                if k == 0 {
                    q.delta2 = v;
                } else {
                    q.alpha = v;
                }
                value(&q)
            };
            let fd = (at(x + h)? - at(x - h)?) / (2.0 * h);
            out.push(GradRow {
                nu: nu.value(),
                parameter: name,
                analytic: g[k],
                finite_difference: fd,
                rel_error: (g[k] - fd).abs() / fd.abs().max(1e-6),
            });
        }
    }
    if let Some(report) = &a.report {
        write_json(report, &json!({"config": cfg, "data": a.data, "task": a.task, "delta2": a.delta2, "alpha": a.alpha, "step": a.step, "rows": out}))?;
    }
    let table: Vec<Vec<String>> = out
        .iter()
        .map(|r| {
            vec![
                r.nu.to_string(),
                r.parameter.into(),
                num(r.analytic),
                num(r.finite_difference),
                format!("{:.2e}", r.rel_error),
            ]
        })
        .collect();
    print(&render(&["nu", "parameter", "analytic", "finite diff", "rel error"], &table));
    Ok(())
}

pub fn isometry(global: &GlobalArgs, a: &IsometryCmd) -> Result<(), CliError> {
    let cfg = resolve(global, &a.fit, &SplitArgs::default())?;
    let rows = read_rows(&a.data, &cfg, a.with_response)?;
    let d = &rows.densities;
    if d.len() < 2 {
        return Err(CliError::Data("at least two densities are needed".into()));
    }
    let sphere: Vec<_> = d.iter().map(to_sphere).collect();
    let mut max_abs = 0.0f64;
    let mut sum_abs = 0.0;
    let mut max_rel = 0.0f64;
    let mut pairs = 0usize;
    for i in 0..d.len() {
        for j in i + 1..d.len() {
            let defect = isometry_defect(&d[i], &d[j]);
            let dist = geodesic_distance(&sphere[i], &sphere[j]);
            max_abs = max_abs.max(defect.abs());
            sum_abs += defect.abs();
            if dist > 0.0 {
                max_rel = max_rel.max(defect.abs() / dist);
            }
            pairs += 1;
        }
    }
    let mean_abs = sum_abs / pairs as f64;
    if let Some(report) = &a.report {
        write_json(
            report,
            &json!({"config": cfg, "data": a.data, "pairs": pairs, "max_abs_defect": max_abs, "mean_abs_defect": mean_abs, "max_rel_defect": max_rel}),
        )?;
    }
    print(&render(
        &["quantity", "value"],
        &[
            vec!["pairs".into(), pairs.to_string()],
            vec!["max |defect|".into(), num(max_abs)],
            vec!["mean |defect|".into(), num(mean_abs)],
            vec!["max |defect| / distance".into(), num(max_rel)],
        ],
    ));
    Ok(())
}

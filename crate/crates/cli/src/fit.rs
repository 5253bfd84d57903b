use clap::ValueEnum;
use fisher_gp::classification::{laplace_map, ClassifyTrainSet, NewtonConfig};
use fisher_gp::inference::{
    default_init_classification, default_init_regression, gradient_descent, hmc_sample, prior_medians,
    select_nu_classification, select_nu_regression, ClassificationObjective, CvReport, HMCChain, Objective,
    RegressionObjective,
};
use fisher_gp::io::Model;
use fisher_gp::metrics::{accuracy_auc, rmse};
use fisher_gp::regression::{fit_regression, RegressionTrainSet};
use fisher_gp::rng::derive_seed;
use fisher_gp::{DensityOnGrid, Nu};
use serde::{Deserialize, Serialize};

use crate::config::{Optimizer, RunConfig};
use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Regress,
    Classify,
}

impl Task {
    pub fn of(model: &Model) -> Task {
        match model {
            Model::Regression(_) => Task::Regress,
            Model::Classification(_) => Task::Classify,
        }
    }
}

pub enum TrainSet {
    Regress(RegressionTrainSet),
    Classify(ClassifyTrainSet),
}

impl TrainSet {
    pub fn new(task: Task, densities: &[DensityOnGrid], responses: Vec<f64>, cfg: &RunConfig) -> Result<Self, CliError> {
        Ok(match task {
            Task::Regress => TrainSet::Regress(RegressionTrainSet::from_densities(densities, responses, cfg.noise_var)?),
            Task::Classify => TrainSet::Classify(ClassifyTrainSet::from_densities(densities, responses)?),
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FitSummary {
    pub task: Task,
    pub n_train: usize,
    pub optimizer: Optimizer,
    pub nu: f64,
    pub cv: Option<CvReport>,
    pub delta2: f64,
    pub alpha: f64,
    /// NLML at the starting point: the default initialization for gradient
    /// descent, the prior medians for HMC.
    pub initial_nlml: f64,
    pub final_nlml: f64,
    /// NLML after each accepted gradient step.
    pub nlml_trace: Option<Vec<f64>>,
    pub iterations: Option<usize>,
    pub converged: Option<bool>,
    /// Posterior potential at each HMC transition.
    pub energy_trace: Option<Vec<f64>>,
    pub accept_rate: Option<f64>,
    pub step_size: Option<f64>,
    pub jitter_used: Option<f64>,
}

fn choose_nu(train: &TrainSet, cfg: &RunConfig, seed: u64) -> Result<(Nu, Option<CvReport>), CliError> {
    if let [nu] = cfg.nu.as_slice() {
        return Ok((*nu, None));
    }
    let cv_seed = derive_seed(seed, 2);
    let report = match train {
        TrainSet::Regress(t) => select_nu_regression(t, &cfg.nu, cfg.folds, cv_seed, &cfg.gd)?,
        TrainSet::Classify(t) => select_nu_classification(t, &cfg.nu, cfg.folds, cv_seed, &cfg.gd)?,
    };
    Ok((report.nu, Some(report)))
}

struct Estimate {
    theta: [f64; 2],
    initial: f64,
    last: f64,
    trace: Option<Vec<f64>>,
    iterations: Option<usize>,
    converged: Option<bool>,
    chain: Option<HMCChain>,
}

fn estimate(obj: &impl Objective, init: [f64; 2], cfg: &RunConfig, seed: u64) -> Result<Estimate, CliError> {
    match cfg.optimizer {
        Optimizer::Grad => {
            let r = gradient_descent(obj, init, &cfg.gd)?;
            Ok(Estimate {
                theta: r.theta,
                initial: r.initial_value,
                last: r.value,
                trace: Some(r.trace),
                iterations: Some(r.iterations),
                converged: Some(r.converged),
                chain: None,
            })
        }
        Optimizer::Hmc => {
            let hmc = fisher_gp::inference::HMCConfig {
                seed: derive_seed(seed, 3),
                ..cfg.hmc
            };
            let chain = hmc_sample(obj, &cfg.prior, &hmc)?;
            let theta = chain.mean();
            Ok(Estimate {
                theta,
                initial: obj.value(prior_medians(&cfg.prior)?)?,
                last: obj.value(theta)?,
                trace: None,
                iterations: None,
                converged: None,
                chain: Some(chain),
            })
        }
    }
}

/// Selects `ν`, estimates `(δ², α)` and builds the fitted model.
pub fn fit_model(train: &TrainSet, cfg: &RunConfig, seed: u64) -> Result<(Model, FitSummary, Option<HMCChain>), CliError> {
    let (nu, cv) = choose_nu(train, cfg, seed)?;
    let (model, est, n_train, task) = match train {
        TrainSet::Regress(t) => {
            let obj = RegressionObjective::new(t, nu);
            let est = estimate(&obj, default_init_regression(t), cfg, seed)?;
            let fit = fit_regression(t, &obj.params(est.theta)?)?;
            (Model::Regression(fit), est, t.len(), Task::Regress)
        }
        TrainSet::Classify(t) => {
            let obj = ClassificationObjective::new(t, nu);
            let est = estimate(&obj, default_init_classification(t), cfg, seed)?;
            let state = laplace_map(t, &obj.params(est.theta)?, &NewtonConfig::default())?;
            (Model::Classification(state), est, t.len(), Task::Classify)
        }
    };
    let jitter_used = match &model {
        Model::Regression(f) => Some(f.jitter_used()),
        Model::Classification(_) => None,
    };
    let chain = est.chain;
    let summary = FitSummary {
        task,
        n_train,
        optimizer: cfg.optimizer,
        nu: nu.value(),
        cv,
        delta2: est.theta[0],
        alpha: est.theta[1],
        initial_nlml: est.initial,
        final_nlml: est.last,
        nlml_trace: est.trace,
        iterations: est.iterations,
        converged: est.converged,
        energy_trace: chain.as_ref().map(|c| c.trace.iter().map(|s| s.energy).collect()),
        accept_rate: chain.as_ref().map(|c| c.accept_rate),
        step_size: chain.as_ref().map(|c| c.step_size),
        jitter_used,
    };
    Ok((model, summary, chain))
}

/// Test-set metrics of a fitted model.
#[derive(Clone, Debug, Default, Serialize)]
pub struct Metrics {
    pub rmse: Option<f64>,
    pub accuracy: Option<f64>,
    pub auc: Option<f64>,
    /// NLML of the model on its own training set.
    pub nlml: f64,
}

/// Point predictions: the predictive mean, or `P(y = +1)`.
pub fn predict_points(model: &Model, densities: &[DensityOnGrid]) -> Result<Vec<f64>, CliError> {
    densities
        .iter()
        .map(|p| {
            Ok(match model {
                Model::Regression(m) => m.predict(p)?.mean,
                Model::Classification(s) => s.predict(p)?.prob_plus,
            })
        })
        .collect()
}

pub fn evaluate(model: &Model, densities: &[DensityOnGrid], truth: &[f64]) -> Result<Metrics, CliError> {
    let pred = predict_points(model, densities)?;
    Ok(match model {
        Model::Regression(m) => Metrics {
            rmse: Some(rmse(&pred, truth)?),
            nlml: m.nlml(),
            ..Default::default()
        },
        Model::Classification(s) => {
            let c = accuracy_auc(&pred, truth)?;
            Metrics {
                accuracy: Some(c.accuracy),
                auc: c.auc,
                nlml: s.nlml(),
                ..Default::default()
            }
        }
    })
}

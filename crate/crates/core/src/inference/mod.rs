//! Hyperparameter estimation for `(δ², α)` with `ν` held fixed.

mod cv;
mod hmc;
mod optimize;
mod prior;

pub use cv::{select_nu_classification, select_nu_regression, CvReport, DEFAULT_FOLDS};
pub use hmc::{
    hamiltonian, hmc_sample, leapfrog, run_chain, write_chain_csv, ChainStep, HMCChain, HMCConfig, Phase, Potential,
    PosteriorPotential,
};
pub use optimize::{gradient_descent, GdConfig, GdResult};
pub use prior::{log_prior, log_prior_grad, prior_medians, PriorConfig};

use crate::classification::{nlml_classification_with_grad, ClassifyTrainSet};
use crate::covariance::{MaternForm, MaternParams, Nu};
use crate::error::Result;
use crate::regression::{nlml_regression_with_grad, RegressionTrainSet};

/// Negative log-marginal likelihood as a function of `θ = (δ², α)`.
pub trait Objective {
    fn value_grad(&self, theta: [f64; 2]) -> Result<(f64, [f64; 2])>;

    fn value(&self, theta: [f64; 2]) -> Result<f64> {
        Ok(self.value_grad(theta)?.0)
    }
}

/// Wraps a closure returning value and gradient.
pub struct FnObjective<F>(pub F);

impl<F: Fn([f64; 2]) -> Result<(f64, [f64; 2])>> Objective for FnObjective<F> {
    fn value_grad(&self, theta: [f64; 2]) -> Result<(f64, [f64; 2])> {
        (self.0)(theta)
    }
}

pub struct RegressionObjective<'a> {
    pub train: &'a RegressionTrainSet,
    pub nu: Nu,
    pub form: MaternForm,
}

impl<'a> RegressionObjective<'a> {
    pub fn new(train: &'a RegressionTrainSet, nu: Nu) -> Self {
        Self {
            train,
            nu,
            form: MaternForm::default(),
        }
    }

    pub fn params(&self, theta: [f64; 2]) -> Result<MaternParams> {
        Ok(MaternParams::new(theta[0], theta[1], self.nu)?.with_form(self.form))
    }
}

impl Objective for RegressionObjective<'_> {
    fn value_grad(&self, theta: [f64; 2]) -> Result<(f64, [f64; 2])> {
        nlml_regression_with_grad(self.train, &self.params(theta)?)
    }
}

pub struct ClassificationObjective<'a> {
    pub train: &'a ClassifyTrainSet,
    pub nu: Nu,
    pub form: MaternForm,
}

impl<'a> ClassificationObjective<'a> {
    pub fn new(train: &'a ClassifyTrainSet, nu: Nu) -> Self {
        Self {
            train,
            nu,
            form: MaternForm::default(),
        }
    }

    pub fn params(&self, theta: [f64; 2]) -> Result<MaternParams> {
        Ok(MaternParams::new(theta[0], theta[1], self.nu)?.with_form(self.form))
    }
}

impl Objective for ClassificationObjective<'_> {
    fn value_grad(&self, theta: [f64; 2]) -> Result<(f64, [f64; 2])> {
        nlml_classification_with_grad(self.train, &self.params(theta)?)
    }
}

fn median_distance(d: &nalgebra::DMatrix<f64>) -> f64 {
    let n = d.nrows();
    let mut v: Vec<f64> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).map(|(i, j)| d[(i, j)]).collect();
    if v.is_empty() {
        return 1.0;
    }
    v.sort_by(f64::total_cmp);
    let med = v[v.len() / 2];
    if med > 0.0 {
        med
    } else {
        1.0
    }
}

/// Gradient-descent start: target variance (floored) and median pairwise distance.
pub fn default_init_regression(train: &RegressionTrainSet) -> [f64; 2] {
    let y = train.targets();
    let n = y.len() as f64;
    let mean = y.mean();
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    [var.max(1e-4), median_distance(train.features().distances())]
}

/// Gradient-descent start: unit signal variance and median pairwise distance.
pub fn default_init_classification(train: &ClassifyTrainSet) -> [f64; 2] {
    [1.0, median_distance(train.features().distances())]
}

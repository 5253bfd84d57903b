//! GP regression on densities with known Gaussian observation noise.
//!
//! With `A = C_θ + γ²I` and `a = A⁻¹y`, the negative log-marginal likelihood
//! is `½ yᵀa + ½ log|A| + (n/2) log 2π`. Every solve goes through a single
//! Cholesky factor of `A`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use std::f64::consts::PI;

use crate::covariance::{cholesky_with_jitter, matern_k, FeatureSet, JitterPolicy, MaternParams};
use crate::density::DensityOnGrid;
use crate::error::{Error, Result};
use crate::geometry::{embed, EmbeddedFeature};

pub const DEFAULT_NOISE_VAR: f64 = 1e-4;

/// Training inputs for regression: embedded densities, responses and the
/// fixed noise variance `γ²`.
#[derive(Clone, Debug, PartialEq)]
pub struct RegressionTrainSet {
    features: FeatureSet,
    targets: DVector<f64>,
    noise_var: f64,
}

impl RegressionTrainSet {
    pub fn new(features: FeatureSet, targets: Vec<f64>, noise_var: f64) -> Result<Self> {
        if features.len() != targets.len() {
            return Err(Error::LengthMismatch {
                left: features.len(),
                right: targets.len(),
            });
        }
        if !(noise_var > 0.0 && noise_var.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "noise variance must be positive, got {noise_var}"
            )));
        }
        if targets.iter().any(|y| !y.is_finite()) {
            return Err(Error::InvalidInput("non-finite regression target".into()));
        }
        Ok(Self {
            features,
            targets: DVector::from_vec(targets),
            noise_var,
        })
    }

    pub fn from_densities(densities: &[DensityOnGrid], targets: Vec<f64>, noise_var: f64) -> Result<Self> {
        let features = FeatureSet::new(densities.iter().map(embed).collect())?;
        Self::new(features, targets, noise_var)
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn features(&self) -> &FeatureSet {
        &self.features
    }

    pub fn targets(&self) -> &DVector<f64> {
        &self.targets
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            features: self.features.select(idx),
            targets: DVector::from_iterator(idx.len(), idx.iter().map(|&i| self.targets[i])),
            noise_var: self.noise_var,
        }
    }

    fn noisy_covariance(&self, params: &MaternParams) -> DMatrix<f64> {
        let mut a = self.features.covariance(params);
        for i in 0..a.nrows() {
            a[(i, i)] += self.noise_var;
        }
        a
    }

    fn factorize(&self, params: &MaternParams) -> Result<(Cholesky<f64, Dyn>, f64)> {
        cholesky_with_jitter(&self.noisy_covariance(params), params.delta2, &JitterPolicy::default())
    }
}

fn log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
}

fn nlml_from_factor(chol: &Cholesky<f64, Dyn>, y: &DVector<f64>) -> (f64, DVector<f64>) {
    let a = chol.solve(y);
    let n = y.len() as f64;
    let value = 0.5 * y.dot(&a) + 0.5 * log_det(chol) + 0.5 * n * (2.0 * PI).ln();
    (value, a)
}

/// Negative log-marginal likelihood `−l_r(θ)`.
pub fn nlml_regression(train: &RegressionTrainSet, params: &MaternParams) -> Result<f64> {
    let (chol, _) = train.factorize(params)?;
    Ok(nlml_from_factor(&chol, &train.targets).0)
}

/// Gradient of [`nlml_regression`] with respect to `(δ², α)`.
pub fn nlml_regression_grad(train: &RegressionTrainSet, params: &MaternParams) -> Result<[f64; 2]> {
    Ok(nlml_regression_with_grad(train, params)?.1)
}

/// Value and gradient sharing one factorization.
///
/// `∂/∂θ = ½ tr(A⁻¹ ∂C) − ½ aᵀ ∂C a`; the trace uses Cholesky solves against
/// `∂C`.
pub fn nlml_regression_with_grad(train: &RegressionTrainSet, params: &MaternParams) -> Result<(f64, [f64; 2])> {
    let (chol, _) = train.factorize(params)?;
    let (value, a) = nlml_from_factor(&chol, &train.targets);
    let (d_delta, d_alpha) = train.features.covariance_grad(params);
    let mut grad = [0.0; 2];
    for (g, d) in grad.iter_mut().zip([d_delta, d_alpha]) {
        let quad = a.dot(&(&d * &a));
        let trace = chol.solve(&d).trace();
        *g = 0.5 * trace - 0.5 * quad;
    }
    Ok((value, grad))
}

/// Posterior factors for a fixed `θ`.
#[derive(Clone, Debug)]
pub struct FittedRegression {
    params: MaternParams,
    train: RegressionTrainSet,
    chol: Cholesky<f64, Dyn>,
    weights: DVector<f64>,
    jitter_used: f64,
}

impl PartialEq for FittedRegression {
    fn eq(&self, other: &Self) -> bool {
        self.params == other.params
            && self.train == other.train
            && self.weights == other.weights
            && self.jitter_used == other.jitter_used
            && self.chol.l_dirty() == other.chol.l_dirty()
    }
}

/// Predictive mean and variance of the latent GP at a new density.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegressionPrediction {
    pub mean: f64,
    pub variance: f64,
}

pub fn fit_regression(train: &RegressionTrainSet, params: &MaternParams) -> Result<FittedRegression> {
    let (chol, jitter_used) = train.factorize(params)?;
    let weights = chol.solve(&train.targets);
    Ok(FittedRegression {
        params: *params,
        train: train.clone(),
        chol,
        weights,
        jitter_used,
    })
}

impl FittedRegression {
    pub fn params(&self) -> &MaternParams {
        &self.params
    }

    pub fn train(&self) -> &RegressionTrainSet {
        &self.train
    }

    /// `(C_θ + γ²I)⁻¹ y`.
    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn jitter_used(&self) -> f64 {
        self.jitter_used
    }

    /// Lower-triangular factor of `C_θ + γ²I` (plus any jitter).
    pub fn cholesky_factor(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    pub fn nlml(&self) -> f64 {
        nlml_from_factor(&self.chol, &self.train.targets).0
    }

    pub fn predict_feature(&self, x: &EmbeddedFeature) -> Result<RegressionPrediction> {
        let d = self.train.features.distances_to(x)?;
        let k = DVector::from_iterator(d.len(), d.iter().map(|&t| matern_k(t, &self.params)));
        let mean = k.dot(&self.weights);
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&k)
            .expect("Cholesky factor has a positive diagonal");
        let variance = (self.params.delta2 - v.norm_squared()).max(0.0);
        Ok(RegressionPrediction { mean, variance })
    }

    pub fn predict(&self, p: &DensityOnGrid) -> Result<RegressionPrediction> {
        self.predict_feature(&embed(p))
    }
}

impl FittedRegression {
    /// Replaces the solved weights, e.g. with values read back from disk.
    pub(crate) fn with_weights(mut self, weights: DVector<f64>) -> Result<Self> {
        if weights.len() != self.train.len() {
            return Err(Error::LengthMismatch {
                left: self.train.len(),
                right: weights.len(),
            });
        }
        self.weights = weights;
        Ok(self)
    }
}

pub fn predict_regression(model: &FittedRegression, p: &DensityOnGrid) -> Result<RegressionPrediction> {
    model.predict(p)
}

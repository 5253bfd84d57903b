//! Binary GP classification on densities with the Laplace approximation.
//!
//! The likelihood is `P(yᵢ | Zᵢ) = σ(yᵢ Zᵢ)` with the logistic sigmoid. The
//! posterior mode is found by damped Newton iterations written in terms of
//! `B = I + W^½ C W^½`, which is well conditioned for any PSD `C`. The mode
//! is carried as `Ẑ = C a` so that `C⁻¹Ẑ` never needs a solve with `C`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::covariance::{matern_k, FeatureSet, MaternParams};
use crate::density::DensityOnGrid;
use crate::error::{Error, Result};
use crate::geometry::{embed, EmbeddedFeature};
use crate::quadrature::{log_sigmoid, logistic_gaussian_mean, sigmoid};

/// Training inputs for classification; labels are `−1.0` or `+1.0`.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassifyTrainSet {
    features: FeatureSet,
    labels: DVector<f64>,
}

pub(crate) fn check_labels(labels: &[f64]) -> Result<()> {
    match labels.iter().find(|y| **y != 1.0 && **y != -1.0) {
        Some(bad) => Err(Error::InvalidInput(format!("label {bad} is not -1 or +1"))),
        None => Ok(()),
    }
}

impl ClassifyTrainSet {
    pub fn new(features: FeatureSet, labels: Vec<f64>) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::LengthMismatch {
                left: features.len(),
                right: labels.len(),
            });
        }
        check_labels(&labels)?;
        Ok(Self {
            features,
            labels: DVector::from_vec(labels),
        })
    }

    pub fn from_densities(densities: &[DensityOnGrid], labels: Vec<f64>) -> Result<Self> {
        let features = FeatureSet::new(densities.iter().map(embed).collect())?;
        Self::new(features, labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self) -> &FeatureSet {
        &self.features
    }

    pub fn labels(&self) -> &DVector<f64> {
        &self.labels
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            features: self.features.select(idx),
            labels: DVector::from_iterator(idx.len(), idx.iter().map(|&i| self.labels[i])),
        }
    }

    /// Same inputs with every label flipped.
    pub fn flipped(&self) -> Self {
        Self {
            features: self.features.clone(),
            labels: -&self.labels,
        }
    }
}

/// `Σᵢ log σ(yᵢ Zᵢ)`.
pub fn log_sigmoid_likelihood(z: &[f64], labels: &[f64]) -> Result<f64> {
    if z.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: z.len(),
            right: labels.len(),
        });
    }
    check_labels(labels)?;
    Ok(log_lik(z, labels))
}

fn log_lik(z: &[f64], y: &[f64]) -> f64 {
    z.iter().zip(y).map(|(z, y)| log_sigmoid(y * z)).sum()
}

// ∇ log p(y|Z) = (y + 1)/2 − σ(Z) = y σ(−yZ)
fn grad_log_lik(z: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
    z.zip_map(y, |z, y| y * sigmoid(-y * z))
}

// −∇∇ log p(y|Z) = σ(Z)σ(−Z), independent of the labels
fn hessian_diag(z: &DVector<f64>) -> DVector<f64> {
    z.map(|z| sigmoid(z) * sigmoid(-z))
}

fn b_factor(cov: &DMatrix<f64>, sqrt_w: &DVector<f64>) -> Result<Cholesky<f64, Dyn>> {
    let n = cov.nrows();
    let b = DMatrix::from_fn(n, n, |i, j| {
        let v = sqrt_w[i] * cov[(i, j)] * sqrt_w[j];
        if i == j {
            1.0 + v
        } else {
            v
        }
    });
    Cholesky::new(b).ok_or(Error::NotPsd { max_jitter: 0.0 })
}

/// Newton iteration controls.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NewtonConfig {
    pub max_newton: usize,
    /// Sup-norm change in `Z` below which the iteration stops.
    pub tol: f64,
    /// Required sup-norm of the log-posterior gradient at the returned mode.
    pub stationarity_tol: f64,
    pub max_halvings: usize,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            max_newton: 100,
            tol: 1e-10,
            stationarity_tol: 1e-8,
            max_halvings: 30,
        }
    }
}

/// Posterior mode and the factors the Laplace approximation needs.
#[derive(Clone, Debug)]
pub struct LaplaceState {
    params: MaternParams,
    train: ClassifyTrainSet,
    zhat: DVector<f64>,
    weights: DVector<f64>,
    w: DVector<f64>,
    chol_b: Cholesky<f64, Dyn>,
    iterations: usize,
    objective_trace: Vec<f64>,
}

fn log_posterior(a: &DVector<f64>, z: &DVector<f64>, y: &DVector<f64>) -> f64 {
    -0.5 * a.dot(z) + log_lik(z.as_slice(), y.as_slice())
}

/// Finds the posterior mode `Ẑ` of `log p(y|Z) − ½ ZᵀC⁻¹Z`, starting at zero.
pub fn laplace_map(train: &ClassifyTrainSet, params: &MaternParams, cfg: &NewtonConfig) -> Result<LaplaceState> {
    let cov = train.features.covariance(params);
    laplace_map_with_cov(train, params, &cov, cfg)
}

fn laplace_map_with_cov(
    train: &ClassifyTrainSet,
    params: &MaternParams,
    cov: &DMatrix<f64>,
    cfg: &NewtonConfig,
) -> Result<LaplaceState> {
    let n = train.len();
    let y = &train.labels;
    let mut a = DVector::zeros(n);
    let mut z = DVector::zeros(n);
    let mut psi = log_posterior(&a, &z, y);
    let mut trace = vec![psi];
    let mut stationarity = f64::INFINITY;

    for iter in 1..=cfg.max_newton {
        let w = hessian_diag(&z);
        let sw = w.map(f64::sqrt);
        let chol = b_factor(cov, &sw)?;
        let b = w.component_mul(&z) + grad_log_lik(&z, y);
        let rhs = sw.component_mul(&(cov * &b));
        let t = chol.solve(&rhs);
        let a_full = &b - sw.component_mul(&t);
        let z_full = cov * &a_full;

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=cfg.max_halvings {
            let a_try = &a + (&a_full - &a) * step;
            let z_try = &z + (&z_full - &z) * step;
            let psi_try = log_posterior(&a_try, &z_try, y);
            if psi_try >= psi {
                accepted = Some((a_try, z_try, psi_try));
                break;
            }
            step *= 0.5;
        }
        let Some((a_new, z_new, psi_new)) = accepted else {
            // no ascent at any step length: already at the mode up to round-off
            break;
        };
        let change = (&z_new - &z).amax();
        a = a_new;
        z = cov * &a;
        psi = psi_new;
        trace.push(psi);
        stationarity = (grad_log_lik(&z, y) - &a).amax();
        if change < cfg.tol && stationarity < cfg.stationarity_tol {
            return finish(train, params, cov, a, z, iter, trace);
        }
    }
    stationarity = stationarity.min((grad_log_lik(&z, y) - &a).amax());
    if stationarity < cfg.stationarity_tol {
        let iterations = trace.len() - 1;
        return finish(train, params, cov, a, z, iterations, trace);
    }
    Err(Error::NoConvergence {
        what: "Laplace Newton iteration",
        iterations: cfg.max_newton,
        residual: stationarity,
    })
}

fn finish(
    train: &ClassifyTrainSet,
    params: &MaternParams,
    cov: &DMatrix<f64>,
    weights: DVector<f64>,
    zhat: DVector<f64>,
    iterations: usize,
    objective_trace: Vec<f64>,
) -> Result<LaplaceState> {
    let w = hessian_diag(&zhat);
    let chol_b = b_factor(cov, &w.map(f64::sqrt))?;
    Ok(LaplaceState {
        params: *params,
        train: train.clone(),
        zhat,
        weights,
        w,
        chol_b,
        iterations,
        objective_trace,
    })
}

/// Latent predictive moments and the class-probability of `+1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassPrediction {
    pub latent_mean: f64,
    pub latent_var: f64,
    pub prob_plus: f64,
}

impl ClassPrediction {
    /// `+1` iff `prob_plus ≥ ½`.
    pub fn label(&self) -> f64 {
        if self.prob_plus >= 0.5 {
            1.0
        } else {
            -1.0
        }
    }
}

impl LaplaceState {
    pub fn params(&self) -> &MaternParams {
        &self.params
    }

    pub fn train(&self) -> &ClassifyTrainSet {
        &self.train
    }

    /// Posterior mode `Ẑ`.
    pub fn zhat(&self) -> &DVector<f64> {
        &self.zhat
    }

    /// `C⁻¹Ẑ`, equal to `∇ log p(y|Ẑ)` at the mode.
    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    /// Diagonal of `W = −∇∇ log p(y|Ẑ)`.
    pub fn w(&self) -> &DVector<f64> {
        &self.w
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Log-posterior value after each accepted Newton step, starting at `Z = 0`.
    pub fn objective_trace(&self) -> &[f64] {
        &self.objective_trace
    }

    /// Sup-norm of `∇ log p(y|Ẑ) − C⁻¹Ẑ`.
    pub fn stationarity(&self) -> f64 {
        (grad_log_lik(&self.zhat, &self.train.labels) - &self.weights).amax()
    }

    /// Lower-triangular factor of `B = I + W^½ C W^½`.
    pub fn b_factor(&self) -> DMatrix<f64> {
        self.chol_b.l()
    }

    /// `½ ẐᵀC⁻¹Ẑ − log p(y|Ẑ) + ½ log|B|`.
    pub fn nlml(&self) -> f64 {
        let half_logdet: f64 = self.chol_b.l_dirty().diagonal().iter().map(|v| v.ln()).sum();
        0.5 * self.weights.dot(&self.zhat) - log_lik(self.zhat.as_slice(), self.train.labels.as_slice()) + half_logdet
    }

    pub fn predict_feature(&self, x: &EmbeddedFeature) -> Result<ClassPrediction> {
        let d = self.train.features.distances_to(x)?;
        let k = DVector::from_iterator(d.len(), d.iter().map(|&t| matern_k(t, &self.params)));
        let latent_mean = k.dot(&self.weights);
        let sk = self.w.map(f64::sqrt).component_mul(&k);
        let v = self
            .chol_b
            .l_dirty()
            .solve_lower_triangular(&sk)
            .expect("Cholesky factor has a positive diagonal");
        let latent_var = (self.params.delta2 - v.norm_squared()).max(0.0);
        Ok(ClassPrediction {
            latent_mean,
            latent_var,
            prob_plus: logistic_gaussian_mean(latent_mean, latent_var),
        })
    }

    pub fn predict(&self, p: &DensityOnGrid) -> Result<ClassPrediction> {
        self.predict_feature(&embed(p))
    }

    /// Rebuilds a state from stored mode and weights without re-running Newton.
    pub(crate) fn from_parts(
        train: ClassifyTrainSet,
        params: MaternParams,
        zhat: Vec<f64>,
        weights: Vec<f64>,
        iterations: usize,
    ) -> Result<Self> {
        if zhat.len() != train.len() || weights.len() != train.len() {
            return Err(Error::LengthMismatch {
                left: train.len(),
                right: zhat.len().min(weights.len()),
            });
        }
        let cov = train.features.covariance(&params);
        finish(
            &train,
            &params,
            &cov,
            DVector::from_vec(weights),
            DVector::from_vec(zhat),
            iterations,
            Vec::new(),
        )
    }
}

pub fn predict_class(state: &LaplaceState, p: &DensityOnGrid) -> Result<ClassPrediction> {
    state.predict(p)
}

/// Negative approximate log-marginal likelihood `−l_c(θ)`.
pub fn nlml_classification(train: &ClassifyTrainSet, params: &MaternParams) -> Result<f64> {
    Ok(laplace_map(train, params, &NewtonConfig::default())?.nlml())
}

pub fn nlml_classification_grad(train: &ClassifyTrainSet, params: &MaternParams) -> Result<[f64; 2]> {
    Ok(nlml_classification_with_grad(train, params)?.1)
}

/// Value and gradient of `−l_c(θ)`.
///
/// The gradient has an explicit part (mode held fixed) and an implicit part
/// through `∂Ẑ/∂θ = (I + CW)⁻¹ ∂C ∇log p(y|Ẑ)`, weighted by
/// `∂l_c/∂Ẑᵢ = ½ [(C⁻¹ + W)⁻¹]ᵢᵢ ∂³log p/∂Ẑᵢ³`.
pub fn nlml_classification_with_grad(train: &ClassifyTrainSet, params: &MaternParams) -> Result<(f64, [f64; 2])> {
    let cov = train.features.covariance(params);
    let state = laplace_map_with_cov(train, params, &cov, &NewtonConfig::default())?;
    let value = state.nlml();
    let n = train.len();

    let s = state.zhat.map(sigmoid);
    let sw = state.w.map(f64::sqrt);
    let l = state.chol_b.l_dirty();

    // R = W^½ B⁻¹ W^½ = (C + W⁻¹)⁻¹
    let sw_diag = DMatrix::from_diagonal(&sw);
    let r = &sw_diag * state.chol_b.solve(&sw_diag);

    // diag((C⁻¹ + W)⁻¹) = diag(C) − colsum((L⁻¹ W^½ C)∘(L⁻¹ W^½ C))
    let swc = &sw_diag * &cov;
    let lc = l
        .solve_lower_triangular(&swc)
        .expect("Cholesky factor has a positive diagonal");
    let third = s.map(|s| -s * (1.0 - s) * (1.0 - 2.0 * s));
    let dl_dz = DVector::from_fn(n, |i, _| {
        let post_var = cov[(i, i)] - lc.column(i).norm_squared();
        0.5 * post_var * third[i]
    });

    let g = &state.weights;
    let (d_delta, d_alpha) = train.features.covariance_grad(params);
    let mut grad = [0.0; 2];
    for (out, d) in grad.iter_mut().zip([d_delta, d_alpha]) {
        let explicit = 0.5 * g.dot(&(&d * g)) - 0.5 * r.component_mul(&d).sum();
        let b = &d * g;
        let dz = &b - &cov * (&r * &b);
        *out = -(explicit + dl_dz.dot(&dz));
    }
    Ok((value, grad))
}

//! Half-integer Matérn covariances over embedded density features.

use nalgebra::{Cholesky, DMatrix, Dyn};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geometry::EmbeddedFeature;

/// Matérn smoothness `ν = k + 1/2` for `k = 0..=3`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub enum Nu {
    Half,
    ThreeHalves,
    FiveHalves,
    SevenHalves,
}

impl Nu {
    pub const ALL: [Nu; 4] = [Nu::Half, Nu::ThreeHalves, Nu::FiveHalves, Nu::SevenHalves];

    pub fn value(self) -> f64 {
        match self {
            Nu::Half => 0.5,
            Nu::ThreeHalves => 1.5,
            Nu::FiveHalves => 2.5,
            Nu::SevenHalves => 3.5,
        }
    }
}

impl TryFrom<f64> for Nu {
    type Error = Error;

    fn try_from(v: f64) -> Result<Self> {
        Nu::ALL
            .into_iter()
            .find(|nu| nu.value() == v)
            .ok_or(Error::UnsupportedNu(v))
    }
}

impl From<Nu> for f64 {
    fn from(nu: Nu) -> f64 {
        nu.value()
    }
}

impl fmt::Display for Nu {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

impl FromStr for Nu {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let v = match s.split_once('/') {
            Some((num, den)) => {
                let num: f64 = num.trim().parse().map_err(|_| Error::InvalidInput(format!("bad nu '{s}'")))?;
                let den: f64 = den.trim().parse().map_err(|_| Error::InvalidInput(format!("bad nu '{s}'")))?;
                num / den
            }
            None => s.parse().map_err(|_| Error::InvalidInput(format!("bad nu '{s}'")))?,
        };
        Nu::try_from(v)
    }
}

/// How the scaled Matérn argument depends on the distance `t`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaternForm {
    /// `u = 2√ν · t / α`, the standard positive-definite family.
    #[default]
    Linear,
    /// `u = 2√(ν t) / α`, the literal square-root reading, kept for
    /// reproduction experiments only. Not guaranteed positive definite.
    SqrtLiteral,
}

/// Covariance hyperparameters `θ = (δ², α, ν)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaternParams {
    pub delta2: f64,
    pub alpha: f64,
    pub nu: Nu,
    #[serde(default)]
    pub form: MaternForm,
}

impl MaternParams {
    pub fn new(delta2: f64, alpha: f64, nu: Nu) -> Result<Self> {
        for v in [delta2, alpha] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::NonPositiveParam(v));
            }
        }
        Ok(Self {
            delta2,
            alpha,
            nu,
            form: MaternForm::Linear,
        })
    }

    pub fn with_form(mut self, form: MaternForm) -> Self {
        self.form = form;
        self
    }

    fn scaled(&self, t: f64) -> f64 {
        let nu = self.nu.value();
        match self.form {
            MaternForm::Linear => 2.0 * nu.sqrt() * t / self.alpha,
            MaternForm::SqrtLiteral => 2.0 * (nu * t).sqrt() / self.alpha,
        }
    }
}

// Polynomial factor P(u) of the closed form K = δ² P(u) e^{-u}, and
// Q(u) = P(u) − P'(u), so that d/du [P e^{-u}] = −Q e^{-u}.
fn poly_and_decay(nu: Nu, u: f64) -> (f64, f64) {
    match nu {
        Nu::Half => (1.0, 1.0),
        Nu::ThreeHalves => (1.0 + u, u),
        Nu::FiveHalves => (1.0 + u + u * u / 3.0, u * (1.0 + u) / 3.0),
        Nu::SevenHalves => (
            1.0 + u + 2.0 * u * u / 5.0 + u * u * u / 15.0,
            u * (3.0 + 3.0 * u + u * u) / 15.0,
        ),
    }
}

/// Matérn covariance at distance `t ≥ 0`.
pub fn matern_k(t: f64, params: &MaternParams) -> f64 {
    if t == 0.0 {
        return params.delta2;
    }
    let u = params.scaled(t);
    let (p, _) = poly_and_decay(params.nu, u);
    params.delta2 * p * (-u).exp()
}

/// Partial derivatives `(∂K/∂δ², ∂K/∂α)` at distance `t`.
pub fn matern_k_grad(t: f64, params: &MaternParams) -> (f64, f64) {
    if t == 0.0 {
        return (1.0, 0.0);
    }
    let u = params.scaled(t);
    let (p, q) = poly_and_decay(params.nu, u);
    let e = (-u).exp();
    // u ∝ 1/α in both forms, so du/dα = −u/α
    let d_alpha = params.delta2 * q * e * u / params.alpha;
    (p * e, d_alpha)
}

/// Diagonal inflation schedule used when a covariance matrix fails to factor.
/// Levels are relative to δ² and grow by ×10 from `start` up to `max`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JitterPolicy {
    pub start: f64,
    pub max: f64,
}

impl Default for JitterPolicy {
    fn default() -> Self {
        Self {
            start: 1e-10,
            max: 1e-6,
        }
    }
}

impl JitterPolicy {
    pub fn disabled() -> Self {
        Self { start: 0.0, max: 0.0 }
    }

    fn levels(&self) -> Vec<f64> {
        let mut out = vec![0.0];
        if self.start > 0.0 {
            let mut j = self.start;
            while j <= self.max * (1.0 + 1e-9) {
                out.push(j);
                j *= 10.0;
            }
        }
        out
    }
}

/// Factors `mat + j·scale·I` for the first jitter level `j` whose smallest
/// pivot clears the rounding floor.
/// Returns the factor and the absolute jitter added.
pub(crate) fn cholesky_with_jitter(
    mat: &DMatrix<f64>,
    scale: f64,
    policy: &JitterPolicy,
) -> Result<(Cholesky<f64, Dyn>, f64)> {
    for level in policy.levels() {
        let jitter = level * scale;
        let mut m = mat.clone();
        if jitter > 0.0 {
            for i in 0..m.nrows() {
                m[(i, i)] += jitter;
            }
        }
        if let Some(chol) = Cholesky::new(m) {
            // a pivot at rounding level means the matrix is numerically singular
            let floor = mat.nrows() as f64 * f64::EPSILON * scale;
            let min_pivot = chol.l_dirty().diagonal().iter().fold(f64::INFINITY, |a, v| a.min(v * v));
            if min_pivot > floor {
                return Ok((chol, jitter));
            }
        }
    }
    Err(Error::NotPsd {
        max_jitter: policy.max * scale,
    })
}

/// A covariance matrix together with the diagonal jitter its factorization
/// needed.
#[derive(Clone, Debug, PartialEq)]
pub struct CovMatrix {
    pub entries: DMatrix<f64>,
    pub jitter_used: f64,
}

/// Features with their pairwise distance matrix cached, so that covariance
/// matrices for many `θ` can be assembled in O(n²).
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSet {
    features: Vec<EmbeddedFeature>,
    distances: DMatrix<f64>,
}

impl FeatureSet {
    pub fn new(features: Vec<EmbeddedFeature>) -> Result<Self> {
        let n = features.len();
        if n == 0 {
            return Err(Error::InvalidInput("empty feature set".into()));
        }
        let m = features[0].grid_size();
        if let Some(f) = features.iter().find(|f| f.grid_size() != m) {
            return Err(Error::LengthMismatch {
                left: m,
                right: f.grid_size(),
            });
        }
        let mut distances = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..i {
                let d = features[i].distance(&features[j]);
                distances[(i, j)] = d;
                distances[(j, i)] = d;
            }
        }
        Ok(Self {
            features,
            distances,
        })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn grid_size(&self) -> usize {
        self.features[0].grid_size()
    }

    pub fn features(&self) -> &[EmbeddedFeature] {
        &self.features
    }

    pub fn distances(&self) -> &DMatrix<f64> {
        &self.distances
    }

    /// Subset in the given index order.
    pub fn select(&self, idx: &[usize]) -> Self {
        let features = idx.iter().map(|&i| self.features[i].clone()).collect();
        let distances = DMatrix::from_fn(idx.len(), idx.len(), |a, b| self.distances[(idx[a], idx[b])]);
        Self {
            features,
            distances,
        }
    }

    /// Distances from `x` to every feature in the set.
    pub fn distances_to(&self, x: &EmbeddedFeature) -> Result<Vec<f64>> {
        if x.grid_size() != self.grid_size() {
            return Err(Error::LengthMismatch {
                left: self.grid_size(),
                right: x.grid_size(),
            });
        }
        Ok(self.features.iter().map(|f| f.distance(x)).collect())
    }

    /// Raw covariance matrix, no factorization attempted.
    pub fn covariance(&self, params: &MaternParams) -> DMatrix<f64> {
        let n = self.len();
        let mut c = DMatrix::zeros(n, n);
        for j in 0..n {
            c[(j, j)] = params.delta2;
            for i in 0..j {
                let k = matern_k(self.distances[(i, j)], params);
                c[(i, j)] = k;
                c[(j, i)] = k;
            }
        }
        c
    }

    /// `(∂C/∂δ², ∂C/∂α)`.
    pub fn covariance_grad(&self, params: &MaternParams) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = self.len();
        let mut d_delta = DMatrix::zeros(n, n);
        let mut d_alpha = DMatrix::zeros(n, n);
        for j in 0..n {
            d_delta[(j, j)] = 1.0;
            for i in 0..j {
                let (gd, ga) = matern_k_grad(self.distances[(i, j)], params);
                d_delta[(i, j)] = gd;
                d_delta[(j, i)] = gd;
                d_alpha[(i, j)] = ga;
                d_alpha[(j, i)] = ga;
            }
        }
        (d_delta, d_alpha)
    }
}

/// Assembles `C_ij = K(‖vᵢ − vⱼ‖₂)` and checks that it factors, escalating the
/// diagonal jitter when needed.
pub fn build_cov(
    features: &[EmbeddedFeature],
    params: &MaternParams,
    policy: &JitterPolicy,
) -> Result<CovMatrix> {
    let set = FeatureSet::new(features.to_vec())?;
    build_cov_for(&set, params, policy)
}

pub fn build_cov_for(set: &FeatureSet, params: &MaternParams, policy: &JitterPolicy) -> Result<CovMatrix> {
    let entries = set.covariance(params);
    let (_, jitter_used) = cholesky_with_jitter(&entries, params.delta2, policy)?;
    Ok(CovMatrix {
        entries,
        jitter_used,
    })
}

use thiserror::Error;

/// Errors raised by the density, geometry, GP and inference routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("density integrates to a non-positive value")]
    AllZero,

    #[error("negative density value {value:e} at grid index {index}")]
    NegativeInput { index: usize, value: f64 },

    #[error("samples have zero spread, bandwidth cannot be selected")]
    DegenerateSamples,

    #[error("exponential map leaves the upper hemisphere (min component {min:e})")]
    LeavesHemisphere { min: f64 },

    #[error("points are antipodal, parallel transport is undefined")]
    AntipodalPair,

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("unsupported smoothness nu = {0}; expected one of 0.5, 1.5, 2.5, 3.5")]
    UnsupportedNu(f64),

    #[error("covariance matrix is not positive definite (jitter up to {max_jitter:e} exhausted)")]
    NotPsd { max_jitter: f64 },

    #[error("line search found no decrease at the minimum step (value {value}, gradient norm {grad_norm:e})")]
    LineSearchFailed {
        point: [f64; 2],
        value: f64,
        grad_norm: f64,
    },

    #[error("parameter must be strictly positive, got {0}")]
    NonPositiveParam(f64),

    #[error("non-finite potential gradient during leapfrog integration")]
    NonFiniteGradient,

    #[error("HMC acceptance rate {rate:.4} is below 1%; reduce the step size")]
    AllRejected { rate: f64 },

    #[error("AUC requires both classes to be present")]
    OneClassOnly,

    #[error("{0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

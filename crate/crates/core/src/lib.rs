//! Gaussian-process regression and binary classification indexed by
//! probability densities on [0, 1].
//!
//! Densities are mapped through `p ↦ √p` onto the positive part of the unit
//! Hilbert sphere, then into the tangent space at the uniform density. A
//! Matérn covariance over that tangent space gives a non-degenerate GP prior
//! on densities. Hyperparameters are fitted by gradient descent on the
//! negative log-marginal likelihood or sampled with Hamiltonian Monte Carlo.

pub mod classification;
pub mod covariance;
pub mod datasets;
pub mod density;
pub mod error;
pub mod geometry;
pub mod inference;
pub mod io;
pub mod metrics;
pub mod quadrature;
pub mod regression;
pub mod rng;

#[cfg(test)]
pub(crate) mod testing;

pub use covariance::{build_cov, matern_k, matern_k_grad, FeatureSet, JitterPolicy, MaternForm, MaternParams, Nu};
pub use density::{kde_estimate, normalize, trapezoid_inner, DensityOnGrid, SampleBatch};
pub use error::{Error, Result};
pub use geometry::{embed, EmbeddedFeature, SpherePoint, TangentVector};

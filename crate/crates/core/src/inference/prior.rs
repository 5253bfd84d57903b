use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, InverseGamma};
use statrs::function::gamma::ln_gamma;
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Half-Cauchy scale for `δ²` and inverse-gamma shape/scale for `α`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PriorConfig {
    pub b_delta2: f64,
    pub a_alpha: f64,
    pub b_alpha: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            b_delta2: 5.0,
            a_alpha: 2.0,
            b_alpha: 1.0,
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        for v in [self.b_delta2, self.a_alpha, self.b_alpha] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::NonPositiveParam(v));
            }
        }
        Ok(())
    }
}

fn check(delta2: f64, alpha: f64) -> Result<()> {
    for v in [delta2, alpha] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::NonPositiveParam(v));
        }
    }
    Ok(())
}

/// `log HalfCauchy(δ²; b_δ²) + log InvGamma(α; a_α, b_α)`.
pub fn log_prior(delta2: f64, alpha: f64, cfg: &PriorConfig) -> Result<f64> {
    check(delta2, alpha)?;
    cfg.validate()?;
    let b = cfg.b_delta2;
    let half_cauchy = 2f64.ln() - PI.ln() - b.ln() - (delta2 / b).powi(2).ln_1p();
    let (a, s) = (cfg.a_alpha, cfg.b_alpha);
    let inv_gamma = a * s.ln() - ln_gamma(a) - (a + 1.0) * alpha.ln() - s / alpha;
    Ok(half_cauchy + inv_gamma)
}

/// Partial derivatives of [`log_prior`] in `(δ², α)`.
pub fn log_prior_grad(delta2: f64, alpha: f64, cfg: &PriorConfig) -> Result<[f64; 2]> {
    check(delta2, alpha)?;
    cfg.validate()?;
    let b2 = cfg.b_delta2 * cfg.b_delta2;
    Ok([
        -2.0 * delta2 / (b2 + delta2 * delta2),
        -(cfg.a_alpha + 1.0) / alpha + cfg.b_alpha / (alpha * alpha),
    ])
}

/// Prior medians `(b_δ², median of InvGamma(a_α, b_α))`.
pub fn prior_medians(cfg: &PriorConfig) -> Result<[f64; 2]> {
    cfg.validate()?;
    let ig = InverseGamma::new(cfg.a_alpha, cfg.b_alpha).map_err(|e| Error::InvalidInput(e.to_string()))?;
    Ok([cfg.b_delta2, ig.inverse_cdf(0.5)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::Continuous;

    #[test]
    fn half_cauchy_at_origin() {
        let cfg = PriorConfig::default();
        let v = log_prior(1e-300, 1.0, &cfg).unwrap() - log_prior(1.0, 1.0, &cfg).unwrap();
        let want = (2.0 / (PI * 5.0)).ln() - (2.0 / (PI * 5.0 * (1.0 + 1.0 / 25.0))).ln();
        assert!((v - want).abs() < 1e-14);
    }

    #[test]
    fn inv_gamma_mode_is_stationary() {
        let g = log_prior_grad(1.0, 1.0 / 3.0, &PriorConfig::default()).unwrap();
        assert!(g[1].abs() < 1e-13);
    }

    #[test]
    fn matches_normalized_densities() {
        let cfg = PriorConfig {
            b_delta2: 2.5,
            a_alpha: 3.0,
            b_alpha: 0.7,
        };
        let ig = InverseGamma::new(3.0, 0.7).unwrap();
        // half-Cauchy normalizing constant by quadrature on x = b tan(u), u ∈ (0, π/2)
        let n = 200_000;
        let h = (PI / 2.0) / n as f64;
        let mut z = 0.0;
        for k in 0..n {
            let u = (k as f64 + 0.5) * h;
            let x = cfg.b_delta2 * u.tan();
            let dx = cfg.b_delta2 / u.cos().powi(2);
            z += h * dx / (1.0 + (x / cfg.b_delta2).powi(2));
        }
        for (d2, a) in [(0.3, 0.2), (4.0, 1.5), (12.0, 0.05)] {
            let hc = (1.0 / (1.0 + (d2 / cfg.b_delta2).powi(2)) / z).ln();
            let want = hc + ig.ln_pdf(a);
            assert!((log_prior(d2, a, &cfg).unwrap() - want).abs() < 1e-10);
        }
    }

    #[test]
    fn gradient_matches_differences() {
        let cfg = PriorConfig::default();
        let (d2, a) = (3.0, 0.8);
        let g = log_prior_grad(d2, a, &cfg).unwrap();
        let h = 1e-6;
        let f = |x: f64, y: f64| log_prior(x, y, &cfg).unwrap();
        assert!((g[0] - (f(d2 + h, a) - f(d2 - h, a)) / (2.0 * h)).abs() < 1e-8);
        assert!((g[1] - (f(d2, a + h) - f(d2, a - h)) / (2.0 * h)).abs() < 1e-8);
    }

    #[test]
    fn rejects_nonpositive() {
        assert!(matches!(
            log_prior(0.0, 1.0, &PriorConfig::default()),
            Err(Error::NonPositiveParam(_))
        ));
        assert!(log_prior(1.0, -1.0, &PriorConfig::default()).is_err());
    }

    #[test]
    fn medians() {
        let m = prior_medians(&PriorConfig::default()).unwrap();
        assert_eq!(m[0], 5.0);
        let ig = InverseGamma::new(2.0, 1.0).unwrap();
        assert!((ig.cdf(m[1]) - 0.5).abs() < 1e-8);
    }
}

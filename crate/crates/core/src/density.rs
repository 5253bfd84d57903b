//! Probability densities on [0, 1] sampled on a uniform grid.
//!
//! Every density in the crate lives on the same kind of grid: `m` equally
//! spaced points with both endpoints included. Integrals and inner products
//! use the composite trapezoid rule on that grid.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

pub const DEFAULT_GRID_SIZE: usize = 512;
pub const MIN_GRID_SIZE: usize = 3;

/// Lower bound applied to every density value before normalization so that
/// square roots and reciprocals stay finite.
pub const FLOOR_EPSILON: f64 = 1e-12;

/// Negative values down to `-NEG_TOLERANCE` are treated as round-off.
pub const NEG_TOLERANCE: f64 = 1e-12;

/// Grid abscissae `k / (m - 1)`, `k = 0..m`.
pub fn grid_points(m: usize) -> Vec<f64> {
    let h = 1.0 / (m - 1) as f64;
    (0..m).map(|k| k as f64 * h).collect()
}

/// Trapezoid weights on the uniform grid of size `m`.
pub fn trapezoid_weights(m: usize) -> Vec<f64> {
    let h = 1.0 / (m - 1) as f64;
    let mut w = vec![h; m];
    w[0] = 0.5 * h;
    w[m - 1] = 0.5 * h;
    w
}

/// Trapezoid approximation of `∫₀¹ f(t) g(t) dt`.
pub fn trapezoid_inner(f: &[f64], g: &[f64]) -> Result<f64> {
    if f.len() != g.len() {
        return Err(Error::LengthMismatch {
            left: f.len(),
            right: g.len(),
        });
    }
    if f.len() < MIN_GRID_SIZE {
        return Err(Error::InvalidInput(format!(
            "grid needs at least {MIN_GRID_SIZE} points, got {}",
            f.len()
        )));
    }
    Ok(inner(f, g))
}

// Hot path used once lengths are known to agree.
#[inline]
pub(crate) fn inner(f: &[f64], g: &[f64]) -> f64 {
    debug_assert_eq!(f.len(), g.len());
    let m = f.len();
    let h = 1.0 / (m - 1) as f64;
    let interior: f64 = f[1..m - 1]
        .iter()
        .zip(&g[1..m - 1])
        .map(|(a, b)| a * b)
        .sum();
    h * (interior + 0.5 * (f[0] * g[0] + f[m - 1] * g[m - 1]))
}

#[inline]
pub(crate) fn norm(f: &[f64]) -> f64 {
    inner(f, f).max(0.0).sqrt()
}

/// Trapezoid L² distance `‖f − g‖₂`.
#[inline]
pub(crate) fn distance(f: &[f64], g: &[f64]) -> f64 {
    let m = f.len();
    let h = 1.0 / (m - 1) as f64;
    let sq = |k: usize| {
        let d = f[k] - g[k];
        d * d
    };
    let interior: f64 = (1..m - 1).map(sq).sum();
    (h * (interior + 0.5 * (sq(0) + sq(m - 1)))).sqrt()
}

fn integral(values: &[f64]) -> f64 {
    let m = values.len();
    let h = 1.0 / (m - 1) as f64;
    let interior: f64 = values[1..m - 1].iter().sum();
    h * (interior + 0.5 * (values[0] + values[m - 1]))
}

/// A nonnegative function on the uniform grid of [0, 1] with unit trapezoid
/// integral.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct DensityOnGrid {
    values: Vec<f64>,
}

impl DensityOnGrid {
    /// The uniform density `1_P` on a grid of size `m`.
    pub fn uniform(m: usize) -> Result<Self> {
        normalize(&vec![1.0; m])
    }

    /// Evaluates `f` on the grid and normalizes the result.
    pub fn from_fn(m: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        if m < MIN_GRID_SIZE {
            return Err(Error::InvalidInput(format!(
                "grid needs at least {MIN_GRID_SIZE} points, got {m}"
            )));
        }
        let values: Vec<f64> = grid_points(m).into_iter().map(f).collect();
        normalize(&values)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn grid_size(&self) -> usize {
        self.values.len()
    }

    pub fn integral(&self) -> f64 {
        integral(&self.values)
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

impl TryFrom<Vec<f64>> for DensityOnGrid {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        normalize(&values)
    }
}

impl From<DensityOnGrid> for Vec<f64> {
    fn from(d: DensityOnGrid) -> Self {
        d.values
    }
}

/// Clamps round-off negatives, floors at [`FLOOR_EPSILON`] and rescales to
/// unit trapezoid integral.
pub fn normalize(values: &[f64]) -> Result<DensityOnGrid> {
    let m = values.len();
    if m < MIN_GRID_SIZE {
        return Err(Error::InvalidInput(format!(
            "grid needs at least {MIN_GRID_SIZE} points, got {m}"
        )));
    }
    let mut clamped = Vec::with_capacity(m);
    for (index, &v) in values.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::InvalidInput(format!(
                "non-finite density value at index {index}"
            )));
        }
        if v < -NEG_TOLERANCE {
            return Err(Error::NegativeInput { index, value: v });
        }
        clamped.push(v.max(0.0));
    }
    if integral(&clamped) <= 0.0 {
        return Err(Error::AllZero);
    }
    for v in clamped.iter_mut() {
        *v = v.max(FLOOR_EPSILON);
    }
    let total = integral(&clamped);
    for v in clamped.iter_mut() {
        *v /= total;
    }
    Ok(DensityOnGrid { values: clamped })
}

/// Draws from an unknown density on [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct SampleBatch {
    draws: Vec<f64>,
}

impl SampleBatch {
    pub fn new(draws: Vec<f64>) -> Result<Self> {
        if draws.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "a sample batch needs at least 2 draws, got {}",
                draws.len()
            )));
        }
        if let Some(bad) = draws.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(Error::InvalidInput(format!(
                "draw {bad} lies outside [0, 1]"
            )));
        }
        Ok(Self { draws })
    }

    pub fn draws(&self) -> &[f64] {
        &self.draws
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }
}

// Linear interpolation between order statistics (R type 7).
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Silverman's rule `0.9 · min(std, IQR/1.34) · s^(−1/5)`.
///
/// When one of the two spread measures is zero the other one is used.
pub fn silverman_bandwidth(draws: &[f64]) -> Result<f64> {
    let s = draws.len() as f64;
    let mean = draws.iter().sum::<f64>() / s;
    let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (s - 1.0);
    let std = var.sqrt();
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let spread = match (std > 0.0, iqr > 0.0) {
        (true, true) => std.min(iqr / 1.34),
        (true, false) => std,
        (false, true) => iqr / 1.34,
        (false, false) => return Err(Error::DegenerateSamples),
    };
    Ok(0.9 * spread * s.powf(-0.2))
}

/// Gaussian kernel density estimate on the grid, with reflection at 0 and 1.
pub fn kde_estimate(
    batch: &SampleBatch,
    grid_size: usize,
    bandwidth: Option<f64>,
) -> Result<DensityOnGrid> {
    if grid_size < MIN_GRID_SIZE {
        return Err(Error::InvalidInput(format!(
            "grid needs at least {MIN_GRID_SIZE} points, got {grid_size}"
        )));
    }
    let h = match bandwidth {
        Some(h) if h > 0.0 && h.is_finite() => h,
        Some(h) => {
            return Err(Error::InvalidInput(format!(
                "bandwidth must be positive, got {h}"
            )))
        }
        None => silverman_bandwidth(batch.draws())?,
    };
    let inv_two_h2 = 1.0 / (2.0 * h * h);
    let scale = 1.0 / (batch.len() as f64 * h * (2.0 * PI).sqrt());
    let values: Vec<f64> = grid_points(grid_size)
        .into_iter()
        .map(|x| {
            let sum: f64 = batch
                .draws()
                .iter()
                .map(|&d| {
                    let direct = x - d;
                    let left = x + d;
                    let right = x - (2.0 - d);
                    (-direct * direct * inv_two_h2).exp()
                        + (-left * left * inv_two_h2).exp()
                        + (-right * right * inv_two_h2).exp()
                })
                .sum();
            scale * sum
        })
        .collect();
    normalize(&values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn beta22(t: f64) -> f64 {
        6.0 * t * (1.0 - t)
    }

    #[test]
    fn constant_vector_normalizes_to_uniform() {
        let d = normalize(&[3.5; 17]).unwrap();
        for v in d.values() {
            assert!((v - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn beta22_keeps_shape_and_integrates_to_one() {
        let m = DEFAULT_GRID_SIZE;
        let raw: Vec<f64> = grid_points(m).into_iter().map(beta22).collect();
        let d = normalize(&raw).unwrap();
        assert!((d.integral() - 1.0).abs() < 1e-12);
        // interior ratios are preserved; only the zero endpoints are floored
        let c = d.values()[m / 2] / raw[m / 2];
        for k in 1..m - 1 {
            assert!((d.values()[k] - c * raw[k]).abs() < 1e-12);
        }
        // the trapezoid integral of the analytic pdf is close to 1 already
        assert!((c - 1.0).abs() < 1e-5);
    }

    #[test]
    fn all_zero_is_rejected() {
        assert_eq!(normalize(&[0.0; 8]), Err(Error::AllZero));
    }

    #[test]
    fn negative_beyond_tolerance_is_rejected() {
        let err = normalize(&[1.0, -1e-6, 1.0]).unwrap_err();
        assert!(matches!(err, Error::NegativeInput { index: 1, .. }));
        // round-off negatives are clamped
        let d = normalize(&[1.0, -1e-13, 1.0]).unwrap();
        assert!(d.values()[1] >= 0.0);
    }

    #[test]
    fn too_short_grid_is_rejected() {
        assert!(normalize(&[1.0, 1.0]).is_err());
    }

    #[test]
    fn inner_product_examples() {
        let one = vec![1.0; 33];
        assert!((trapezoid_inner(&one, &one).unwrap() - 1.0).abs() < 1e-15);

        let m = 1001;
        let t = grid_points(m);
        let s: Vec<f64> = t.iter().map(|x| (2.0 * PI * x).sin()).collect();
        let c: Vec<f64> = t.iter().map(|x| (2.0 * PI * x).cos()).collect();
        assert!(trapezoid_inner(&s, &c).unwrap().abs() < 1e-6);

        let d = DensityOnGrid::from_fn(DEFAULT_GRID_SIZE, beta22).unwrap();
        let phi: Vec<f64> = d.values().iter().map(|v| v.sqrt()).collect();
        assert!((trapezoid_inner(&phi, &phi).unwrap() - 1.0).abs() < 1e-8);

        assert!(matches!(
            trapezoid_inner(&one, &phi),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn kde_of_uniform_draws_is_close_to_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let draws: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>()).collect();
        let d = kde_estimate(&SampleBatch::new(draws).unwrap(), DEFAULT_GRID_SIZE, None).unwrap();
        let dev: Vec<f64> = d.values().iter().map(|v| (v - 1.0).abs()).collect();
        let one = vec![1.0; DEFAULT_GRID_SIZE];
        let l1 = trapezoid_inner(&dev, &one).unwrap();
        assert!(l1 < 0.1, "L1 distance {l1}");
    }

    #[test]
    fn kde_rejects_bad_bandwidth_and_degenerate_batches() {
        let batch = SampleBatch::new(vec![0.1, 0.4, 0.7]).unwrap();
        assert!(matches!(
            kde_estimate(&batch, 64, Some(-1.0)),
            Err(Error::InvalidInput(_))
        ));
        let flat = SampleBatch::new(vec![0.5, 0.5, 0.5]).unwrap();
        assert_eq!(kde_estimate(&flat, 64, None), Err(Error::DegenerateSamples));
        // an explicit bandwidth bypasses selection
        assert!(kde_estimate(&flat, 64, Some(0.05)).is_ok());
    }

    #[test]
    fn sample_batch_validation() {
        assert!(SampleBatch::new(vec![0.5]).is_err());
        assert!(SampleBatch::new(vec![0.5, 1.5]).is_err());
    }

    #[test]
    fn silverman_matches_hand_computation() {
        // draws 0, 0.25, 0.5, 0.75, 1: std = sqrt(0.15625), IQR = 0.5
        let draws = [0.0, 0.25, 0.5, 0.75, 1.0];
        let std = 0.15625f64.sqrt();
        let expected = 0.9 * std.min(0.5 / 1.34) * 5f64.powf(-0.2);
        assert!((silverman_bandwidth(&draws).unwrap() - expected).abs() < 1e-15);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn normalize_is_idempotent(values in prop::collection::vec(0.0f64..10.0, 3..64)) {
                prop_assume!(values.iter().any(|v| *v > 1e-3));
                let once = normalize(&values).unwrap();
                let twice = normalize(once.values()).unwrap();
                for (a, b) in once.values().iter().zip(twice.values()) {
                    prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
                }
            }

            #[test]
            fn inner_is_symmetric_bilinear_and_positive(
                f in prop::collection::vec(-5.0f64..5.0, 16),
                g in prop::collection::vec(-5.0f64..5.0, 16),
                h in prop::collection::vec(-5.0f64..5.0, 16),
                a in -3.0f64..3.0,
            ) {
                let fg = trapezoid_inner(&f, &g).unwrap();
                prop_assert_eq!(fg, trapezoid_inner(&g, &f).unwrap());
                let combo: Vec<f64> = f.iter().zip(&h).map(|(x, y)| a * x + y).collect();
                let lhs = trapezoid_inner(&combo, &g).unwrap();
                let rhs = a * fg + trapezoid_inner(&h, &g).unwrap();
                prop_assert!((lhs - rhs).abs() < 1e-10);
                prop_assert!(trapezoid_inner(&f, &f).unwrap() >= 0.0);
            }

            #[test]
            fn kde_output_is_a_valid_density(
                draws in prop::collection::vec(0.0f64..=1.0, 2..60),
                bw in prop::option::of(0.01f64..0.5),
            ) {
                prop_assume!(bw.is_some() || draws.iter().any(|d| (d - draws[0]).abs() > 1e-9));
                let batch = SampleBatch::new(draws).unwrap();
                let d = kde_estimate(&batch, 65, bw).unwrap();
                prop_assert!((d.integral() - 1.0).abs() < 1e-12);
                prop_assert!(d.values().iter().all(|v| *v >= 0.0));
            }
        }
    }
}

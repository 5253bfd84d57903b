//! Synthetic density datasets for regression and binary classification.

use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::beta::ln_beta;
use statrs::function::gamma::ln_gamma;
use std::f64::consts::{PI, SQRT_2};

use crate::density::{grid_points, inner, kde_estimate, normalize, DensityOnGrid, SampleBatch, DEFAULT_GRID_SIZE};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, from_seed, Rng};

const MAX_REDRAWS: usize = 100;

/// Beta(a, b) density at `t ∈ [0, 1]`, zero outside.
pub fn beta_pdf(a: f64, b: f64, t: f64) -> f64 {
    if !(0.0..=1.0).contains(&t) {
        return 0.0;
    }
    let edge = |x: f64, shape: f64| {
        if shape == 1.0 {
            0.0
        } else {
            (shape - 1.0) * x.ln()
        }
    };
    (edge(t, a) + edge(1.0 - t, b) - ln_beta(a, b)).exp()
}

/// Inverse-gamma density with the given shape and scale, zero for `t ≤ 0`.
pub fn inv_gamma_pdf(shape: f64, scale: f64, t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    (shape * scale.ln() - ln_gamma(shape) - (shape + 1.0) * t.ln() - scale / t).exp()
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `c₁√2 sin 2πt + c₂√2 cos 2πt`.
pub fn tfb_function(c1: f64, c2: f64, t: f64) -> f64 {
    SQRT_2 * (c1 * (2.0 * PI * t).sin() + c2 * (2.0 * PI * t).cos())
}

/// Density proportional to `softplus(g)` on the grid.
pub fn tfb_density(c1: f64, c2: f64, grid_size: usize) -> Result<DensityOnGrid> {
    DensityOnGrid::from_fn(grid_size, |t| softplus(tfb_function(c1, c2, t)))
}

/// Reference coefficients of `g̃`.
pub const TFB_REFERENCE: (f64, f64) = (-0.5, 0.5);

/// Draws from a grid density by inverting its piecewise-linear CDF.
pub fn sample_inverse_cdf(p: &DensityOnGrid, count: usize, rng: &mut Rng) -> Vec<f64> {
    let v = p.values();
    let m = v.len();
    let h = 1.0 / (m - 1) as f64;
    let mut cdf = Vec::with_capacity(m);
    cdf.push(0.0);
    for i in 1..m {
        cdf.push(cdf[i - 1] + 0.5 * h * (v[i - 1] + v[i]));
    }
    let total = cdf[m - 1];
    (0..count)
        .map(|_| {
            let u = rng.random::<f64>() * total;
            let k = cdf.partition_point(|c| *c <= u).clamp(1, m - 1);
            let width = cdf[k] - cdf[k - 1];
            let frac = if width > 0.0 { (u - cdf[k - 1]) / width } else { 0.5 };
            (((k - 1) as f64 + frac) * h).clamp(0.0, 1.0)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionDataset {
    pub densities: Vec<DensityOnGrid>,
    pub targets: Vec<f64>,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationDataset {
    pub densities: Vec<DensityOnGrid>,
    /// `+1.0` or `−1.0`.
    pub labels: Vec<f64>,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TfbConfig {
    pub n: usize,
    /// Standard deviation `γ` of the additive target noise.
    pub noise_sd: f64,
    pub sample_size: usize,
    pub grid_size: usize,
}

impl Default for TfbConfig {
    fn default() -> Self {
        Self {
            n: 100,
            noise_sd: 0.01,
            sample_size: 1000,
            grid_size: DEFAULT_GRID_SIZE,
        }
    }
}

/// Noiseless response `0.5⟨√p, √p̃⟩ + 0.5`.
pub fn tfb_response(p: &DensityOnGrid, reference: &DensityOnGrid) -> f64 {
    let a: Vec<f64> = p.values().iter().map(|v| v.sqrt()).collect();
    let b: Vec<f64> = reference.values().iter().map(|v| v.sqrt()).collect();
    0.5 * inner(&a, &b) + 0.5
}

pub fn gen_regression_tfb(cfg: &TfbConfig, seed: u64) -> Result<RegressionDataset> {
    if cfg.n == 0 {
        return Err(Error::InvalidInput("n must be at least 1".into()));
    }
    if cfg.sample_size < 100 {
        return Err(Error::InvalidInput("sample size must be at least 100".into()));
    }
    if !(cfg.noise_sd >= 0.0 && cfg.noise_sd.is_finite()) {
        return Err(Error::InvalidInput(format!("noise sd {} is invalid", cfg.noise_sd)));
    }
    let reference = tfb_density(TFB_REFERENCE.0, TFB_REFERENCE.1, cfg.grid_size)?;
    let mut densities = Vec::with_capacity(cfg.n);
    let mut targets = Vec::with_capacity(cfg.n);
    for i in 0..cfg.n {
        let mut rng = from_seed(derive_seed(seed, i as u64));
        let c1: f64 = StandardNormal.sample(&mut rng);
        let c2: f64 = StandardNormal.sample(&mut rng);
        let source = tfb_density(c1, c2, cfg.grid_size)?;
        let draws = sample_inverse_cdf(&source, cfg.sample_size, &mut rng);
        let p = kde_estimate(&SampleBatch::new(draws)?, cfg.grid_size, None)?;
        let eps: f64 = StandardNormal.sample(&mut rng);
        targets.push(tfb_response(&p, &reference) + cfg.noise_sd * eps);
        densities.push(p);
    }
    Ok(RegressionDataset { densities, targets, seed })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BetaClassConfig {
    pub n_per_class: usize,
    pub a0: f64,
    pub b0: f64,
    /// Added to both Beta parameters for the `−1` class.
    pub shift: f64,
    pub param_sd: f64,
    pub noise_sd: f64,
    pub grid_size: usize,
}

impl Default for BetaClassConfig {
    fn default() -> Self {
        Self {
            n_per_class: 100,
            a0: 2.0,
            b0: 5.0,
            shift: 0.8,
            param_sd: 0.1,
            noise_sd: 0.02,
            grid_size: DEFAULT_GRID_SIZE,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InvGammaClassConfig {
    pub n_per_class: usize,
    pub shape0: f64,
    pub scale: f64,
    /// Added to the shape for the `−1` class.
    pub shift: f64,
    pub param_sd: f64,
    pub noise_sd: f64,
    pub grid_size: usize,
}

impl Default for InvGammaClassConfig {
    fn default() -> Self {
        Self {
            n_per_class: 100,
            shape0: 3.0,
            scale: 0.5,
            shift: 0.6,
            param_sd: 0.1,
            noise_sd: 0.02,
            grid_size: DEFAULT_GRID_SIZE,
        }
    }
}

fn check_class_args(n_per_class: usize, shift: f64, param_sd: f64, noise_sd: f64) -> Result<()> {
    if n_per_class == 0 {
        return Err(Error::InvalidInput("n_per_class must be at least 1".into()));
    }
    for (name, v) in [("shift", shift), ("param_sd", param_sd), ("noise_sd", noise_sd)] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::InvalidInput(format!("{name} = {v} is invalid")));
        }
    }
    Ok(())
}

fn jitter(rng: &mut Rng, sd: f64) -> f64 {
    if sd == 0.0 {
        0.0
    } else {
        Normal::new(0.0, sd).expect("positive sd").sample(rng)
    }
}

// Grid values of `pdf` plus white noise, clamped at zero and renormalized.
fn noisy_density(grid: &[f64], pdf: impl Fn(f64) -> f64, noise_sd: f64, rng: &mut Rng) -> Result<DensityOnGrid> {
    let values: Vec<f64> = grid
        .iter()
        .map(|&t| (pdf(t) + jitter(rng, noise_sd)).max(0.0))
        .collect();
    normalize(&values)
}

fn gen_two_class(
    n_per_class: usize,
    grid_size: usize,
    seed: u64,
    mut draw: impl FnMut(bool, &mut Rng) -> Option<Box<dyn Fn(f64) -> f64>>,
    noise_sd: f64,
) -> Result<ClassificationDataset> {
    let grid = grid_points(grid_size);
    let mut densities = Vec::with_capacity(2 * n_per_class);
    let mut labels = Vec::with_capacity(2 * n_per_class);
    for i in 0..2 * n_per_class {
        let plus = i < n_per_class;
        let mut rng = from_seed(derive_seed(seed, i as u64));
        let pdf = (0..MAX_REDRAWS)
            .find_map(|_| draw(plus, &mut rng))
            .ok_or_else(|| Error::InvalidInput("no valid class parameters after 100 draws".into()))?;
        densities.push(noisy_density(&grid, pdf, noise_sd, &mut rng)?);
        labels.push(if plus { 1.0 } else { -1.0 });
    }
    Ok(ClassificationDataset { densities, labels, seed })
}

/// Class `+1` around Beta(a₀, b₀), class `−1` around Beta(a₀ + shift, b₀ + shift).
pub fn gen_classification_beta(cfg: &BetaClassConfig, seed: u64) -> Result<ClassificationDataset> {
    check_class_args(cfg.n_per_class, cfg.shift, cfg.param_sd, cfg.noise_sd)?;
    let c = cfg.clone();
    gen_two_class(
        cfg.n_per_class,
        cfg.grid_size,
        seed,
        move |plus, rng| {
            let base = if plus { 0.0 } else { c.shift };
            let a = c.a0 + base + jitter(rng, c.param_sd);
            let b = c.b0 + base + jitter(rng, c.param_sd);
            // shapes below one make the density unbounded at an endpoint
            (a >= 1.0 && b >= 1.0).then(|| Box::new(move |t| beta_pdf(a, b, t)) as Box<dyn Fn(f64) -> f64>)
        },
        cfg.noise_sd,
    )
}

/// Inverse-gamma densities truncated to `[0, 1]`; class `−1` has its shape shifted.
pub fn gen_classification_invgamma(cfg: &InvGammaClassConfig, seed: u64) -> Result<ClassificationDataset> {
    check_class_args(cfg.n_per_class, cfg.shift, cfg.param_sd, cfg.noise_sd)?;
    if !(cfg.scale > 0.0) {
        return Err(Error::InvalidInput(format!("scale {} must be positive", cfg.scale)));
    }
    let c = cfg.clone();
    gen_two_class(
        cfg.n_per_class,
        cfg.grid_size,
        seed,
        move |plus, rng| {
            let shape = c.shape0 + if plus { 0.0 } else { c.shift } + jitter(rng, c.param_sd);
            let scale = c.scale;
            (shape > 0.0).then(|| Box::new(move |t| inv_gamma_pdf(shape, scale, t)) as Box<dyn Fn(f64) -> f64>)
        },
        cfg.noise_sd,
    )
}

/// Random split of `0..n` into train and test indices with `round(frac·n)` train points.
pub fn split_indices(n: usize, train_frac: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::InvalidInput(format!("train fraction {train_frac} not in (0, 1)")));
    }
    let n_train = ((train_frac * n as f64).round() as usize).clamp(1, n.saturating_sub(1).max(1));
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = from_seed(seed);
    rand::seq::SliceRandom::shuffle(idx.as_mut_slice(), &mut rng);
    let test = idx.split_off(n_train);
    Ok((idx, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::trapezoid_weights;

    #[test]
    fn beta_pdf_integrates_to_one() {
        let m = 20_001;
        let w = trapezoid_weights(m);
        for (a, b) in [(2.0, 5.0), (1.0, 1.0), (3.5, 2.2), (1.0, 3.0)] {
            let s: f64 = grid_points(m).iter().zip(&w).map(|(t, w)| w * beta_pdf(a, b, *t)).sum();
            assert!((s - 1.0).abs() < 1e-6, "{a} {b}: {s}");
        }
        assert!((beta_pdf(1.0, 1.0, 0.0) - 1.0).abs() < 1e-14);
        assert_eq!(beta_pdf(2.0, 2.0, 1.0), 0.0);
        assert!((beta_pdf(2.0, 2.0, 0.5) - 1.5).abs() < 1e-14);
    }

    #[test]
    fn inv_gamma_matches_statrs() {
        use statrs::distribution::{Continuous, InverseGamma};
        let d = InverseGamma::new(3.0, 0.5).unwrap();
        for t in [0.05, 0.1, 0.4, 0.9] {
            assert!((inv_gamma_pdf(3.0, 0.5, t) - d.pdf(t)).abs() < 1e-12 * d.pdf(t).max(1.0));
        }
        assert_eq!(inv_gamma_pdf(3.0, 0.5, 0.0), 0.0);
    }

    #[test]
    fn inverse_cdf_sampling_recovers_mean() {
        let p = DensityOnGrid::from_fn(512, |t| beta_pdf(2.0, 5.0, t)).unwrap();
        let mut rng = from_seed(9);
        let draws = sample_inverse_cdf(&p, 200_000, &mut rng);
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        assert!((mean - 2.0 / 7.0).abs() < 3e-3);
        assert!(draws.iter().all(|x| (0.0..=1.0).contains(x)));
    }

    #[test]
    fn identical_density_gives_unit_response() {
        let r = tfb_density(TFB_REFERENCE.0, TFB_REFERENCE.1, 512).unwrap();
        assert!((tfb_response(&r, &r) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tfb_dataset_is_deterministic_and_bounded() {
        let cfg = TfbConfig {
            n: 12,
            noise_sd: 0.0,
            sample_size: 300,
            grid_size: 128,
        };
        let a = gen_regression_tfb(&cfg, 11).unwrap();
        let b = gen_regression_tfb(&cfg, 11).unwrap();
        assert_eq!(a, b);
        assert!(a.targets.iter().all(|y| (0.0..=1.0).contains(y)));
        assert_ne!(a, gen_regression_tfb(&cfg, 12).unwrap());
        let bad = TfbConfig { sample_size: 10, ..cfg };
        assert!(gen_regression_tfb(&bad, 1).is_err());
    }

    #[test]
    fn class_generators_are_valid_and_deterministic() {
        let cfg = BetaClassConfig {
            n_per_class: 10,
            grid_size: 128,
            ..Default::default()
        };
        let a = gen_classification_beta(&cfg, 7).unwrap();
        assert_eq!(a, gen_classification_beta(&cfg, 7).unwrap());
        assert_eq!(a.labels.iter().filter(|y| **y > 0.0).count(), 10);
        assert_eq!(a.labels.len(), 20);
        for d in &a.densities {
            assert!(d.values().iter().all(|v| *v > 0.0));
            assert!((d.integral() - 1.0).abs() < 1e-12);
        }
        let icfg = InvGammaClassConfig {
            n_per_class: 10,
            grid_size: 128,
            ..Default::default()
        };
        let b = gen_classification_invgamma(&icfg, 7).unwrap();
        assert_eq!(b, gen_classification_invgamma(&icfg, 7).unwrap());
        for d in &b.densities {
            assert!((d.integral() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_shift_zero_noise_classes_share_a_law() {
        let cfg = BetaClassConfig {
            n_per_class: 3,
            shift: 0.0,
            param_sd: 0.0,
            noise_sd: 0.0,
            grid_size: 64,
            ..Default::default()
        };
        let d = gen_classification_beta(&cfg, 3).unwrap();
        for p in &d.densities[1..] {
            assert_eq!(p, &d.densities[0]);
        }
    }

    #[test]
    fn split_is_a_partition() {
        let (tr, te) = split_indices(200, 0.75, 4).unwrap();
        assert_eq!(tr.len(), 150);
        assert_eq!(te.len(), 50);
        let mut all: Vec<_> = tr.iter().chain(&te).copied().collect();
        all.sort();
        assert_eq!(all, (0..200).collect::<Vec<_>>());
        assert!(split_indices(10, 1.0, 0).is_err());
    }
}

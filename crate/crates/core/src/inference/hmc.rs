use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::io::{self, Write};

use super::prior::{log_prior, log_prior_grad, prior_medians, PriorConfig};
use super::Objective;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, from_seed, Rng};

/// Potential energy `U(q)` and its gradient in the sampler's coordinates.
pub trait Potential {
    fn energy_grad(&self, q: [f64; 2]) -> Result<(f64, [f64; 2])>;
}

impl<F: Fn([f64; 2]) -> Result<(f64, [f64; 2])>> Potential for F {
    fn energy_grad(&self, q: [f64; 2]) -> Result<(f64, [f64; 2])> {
        self(q)
    }
}

/// Negative log-posterior of `(δ², α)` expressed in `q = (log δ², log α)`,
/// including the Jacobian of the log transform.
pub struct PosteriorPotential<'a, O> {
    pub objective: &'a O,
    pub prior: PriorConfig,
}

impl<O: Objective> Potential for PosteriorPotential<'_, O> {
    fn energy_grad(&self, q: [f64; 2]) -> Result<(f64, [f64; 2])> {
        let theta = [q[0].exp(), q[1].exp()];
        let (nlml, g) = self.objective.value_grad(theta)?;
        let lp = log_prior(theta[0], theta[1], &self.prior)?;
        let lg = log_prior_grad(theta[0], theta[1], &self.prior)?;
        let u = nlml - lp - q[0] - q[1];
        let grad = [theta[0] * (g[0] - lg[0]) - 1.0, theta[1] * (g[1] - lg[1]) - 1.0];
        Ok((u, grad))
    }
}

/// Position and momentum.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Phase {
    pub q: [f64; 2],
    pub p: [f64; 2],
}

fn kinetic(p: [f64; 2]) -> f64 {
    0.5 * (p[0] * p[0] + p[1] * p[1])
}

/// `U(q) + ½‖p‖²`.
pub fn hamiltonian(state: &Phase, potential: &impl Potential) -> Result<f64> {
    Ok(potential.energy_grad(state.q)?.0 + kinetic(state.p))
}

fn finite_grad(u: f64, g: [f64; 2]) -> Result<(f64, [f64; 2])> {
    if u.is_finite() && g.iter().all(|v| v.is_finite()) {
        Ok((u, g))
    } else {
        Err(Error::NonFiniteGradient)
    }
}

// Returns the end state with its potential energy and gradient.
fn leapfrog_from(
    mut s: Phase,
    mut grad: [f64; 2],
    n: usize,
    step: f64,
    potential: &impl Potential,
) -> Result<(Phase, f64, [f64; 2])> {
    let mut u = f64::NAN;
    for _ in 0..n {
        for k in 0..2 {
            s.p[k] -= 0.5 * step * grad[k];
            s.q[k] += step * s.p[k];
        }
        (u, grad) = finite_grad_from(potential.energy_grad(s.q))?;
        for k in 0..2 {
            s.p[k] -= 0.5 * step * grad[k];
        }
    }
    Ok((s, u, grad))
}

fn finite_grad_from(r: Result<(f64, [f64; 2])>) -> Result<(f64, [f64; 2])> {
    let (u, g) = r?;
    finite_grad(u, g)
}

/// `n` half-kick / drift / half-kick steps of size `step`.
pub fn leapfrog(state: Phase, n: usize, step: f64, potential: &impl Potential) -> Result<Phase> {
    if n == 0 || !(step > 0.0) {
        return Err(Error::InvalidInput("leapfrog needs n ≥ 1 and a positive step".into()));
    }
    let (_, grad) = finite_grad_from(potential.energy_grad(state.q))?;
    Ok(leapfrog_from(state, grad, n, step, potential)?.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HMCConfig {
    /// Total draws, burn-in included.
    pub n_samples: usize,
    pub n_leapfrog: usize,
    /// Fixed step size; tuned by a pre-run when absent.
    pub step_size: Option<f64>,
    pub burn_in: usize,
    pub thinning: usize,
    pub seed: u64,
    pub tune_batches: usize,
    pub tune_batch_size: usize,
}

impl Default for HMCConfig {
    fn default() -> Self {
        Self {
            n_samples: 1000,
            n_leapfrog: 20,
            step_size: None,
            burn_in: 200,
            thinning: 2,
            seed: 0,
            tune_batches: 15,
            tune_batch_size: 20,
        }
    }
}

impl HMCConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_leapfrog == 0 || self.thinning == 0 || self.n_samples == 0 {
            return Err(Error::InvalidInput("n_samples, n_leapfrog and thinning must be positive".into()));
        }
        if self.burn_in >= self.n_samples {
            return Err(Error::InvalidInput("burn_in must be below n_samples".into()));
        }
        if let Some(s) = self.step_size {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::InvalidInput(format!("step size {s} must be positive")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainStep {
    pub iteration: usize,
    pub point: [f64; 2],
    /// Potential energy at `point`.
    pub energy: f64,
    pub accepted: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HMCChain {
    /// Retained draws after burn-in and thinning.
    pub samples: Vec<[f64; 2]>,
    pub energies: Vec<f64>,
    pub accept_rate: f64,
    pub step_size: f64,
    /// Every draw of the main run.
    pub trace: Vec<ChainStep>,
}

impl HMCChain {
    /// Mean of the retained draws.
    pub fn mean(&self) -> [f64; 2] {
        let n = self.samples.len() as f64;
        let s = self.samples.iter().fold([0.0, 0.0], |a, x| [a[0] + x[0], a[1] + x[1]]);
        [s[0] / n, s[1] / n]
    }
}

struct Cursor {
    q: [f64; 2],
    u: f64,
    grad: [f64; 2],
}

// One HMC transition; returns whether the proposal was accepted.
fn transition(cur: &mut Cursor, n: usize, step: f64, potential: &impl Potential, rng: &mut Rng) -> bool {
    let p = [StandardNormal.sample(rng), StandardNormal.sample(rng)];
    let e_old = cur.u + kinetic(p);
    let start = Phase { q: cur.q, p };
    let Ok((end, u_new, g_new)) = leapfrog_from(start, cur.grad, n, step, potential) else {
        // a failed trajectory is a rejection; the uniform is still consumed
        let _: f64 = rng.random();
        return false;
    };
    let e_new = u_new + kinetic(end.p);
    let r: f64 = rng.random();
    let accept = e_new.is_finite() && (e_new <= e_old || r < (e_old - e_new).exp());
    if accept {
        *cur = Cursor {
            q: end.q,
            u: u_new,
            grad: g_new,
        };
    }
    accept
}

fn tune_step(cur: &mut Cursor, cfg: &HMCConfig, potential: &impl Potential, rng: &mut Rng) -> f64 {
    let mut step = 0.1;
    for _ in 0..cfg.tune_batches {
        let hits = (0..cfg.tune_batch_size)
            .filter(|_| transition(cur, cfg.n_leapfrog, step, potential, rng))
            .count();
        let rate = hits as f64 / cfg.tune_batch_size.max(1) as f64;
        if rate < 0.6 {
            step *= if rate < 0.2 { 0.3 } else { 0.6 };
        } else if rate > 0.9 {
            step *= 1.4;
        }
    }
    step
}

/// Runs the sampler on an arbitrary potential; points are in the potential's
/// own coordinates.
pub fn run_chain(potential: &impl Potential, init: [f64; 2], cfg: &HMCConfig) -> Result<HMCChain> {
    cfg.validate()?;
    let (u, grad) = finite_grad_from(potential.energy_grad(init))?;
    let mut cur = Cursor { q: init, u, grad };
    let step = match cfg.step_size {
        Some(s) => s,
        None => tune_step(&mut cur, cfg, potential, &mut from_seed(derive_seed(cfg.seed, 1))),
    };
    let mut rng = from_seed(derive_seed(cfg.seed, 0));
    let mut trace = Vec::with_capacity(cfg.n_samples);
    let mut samples = Vec::new();
    let mut energies = Vec::new();
    let mut accepted = 0usize;
    for iteration in 0..cfg.n_samples {
        let ok = transition(&mut cur, cfg.n_leapfrog, step, potential, &mut rng);
        accepted += ok as usize;
        trace.push(ChainStep {
            iteration,
            point: cur.q,
            energy: cur.u,
            accepted: ok,
        });
        if iteration >= cfg.burn_in && (iteration - cfg.burn_in).is_multiple_of(cfg.thinning) {
            samples.push(cur.q);
            energies.push(cur.u);
        }
    }
    let accept_rate = accepted as f64 / cfg.n_samples as f64;
    if accept_rate < 0.01 {
        return Err(Error::AllRejected { rate: accept_rate });
    }
    Ok(HMCChain {
        samples,
        energies,
        accept_rate,
        step_size: step,
        trace,
    })
}

/// Samples `(δ², α)` from the posterior, starting at the prior medians.
pub fn hmc_sample(objective: &impl Objective, prior: &PriorConfig, cfg: &HMCConfig) -> Result<HMCChain> {
    let med = prior_medians(prior)?;
    let potential = PosteriorPotential {
        objective,
        prior: *prior,
    };
    let mut chain = run_chain(&potential, [med[0].ln(), med[1].ln()], cfg)?;
    let exp2 = |q: [f64; 2]| [q[0].exp(), q[1].exp()];
    chain.samples.iter_mut().for_each(|s| *s = exp2(*s));
    chain.trace.iter_mut().for_each(|s| s.point = exp2(s.point));
    Ok(chain)
}

/// Writes `iteration,delta2,alpha,energy,accepted` rows.
pub fn write_chain_csv(chain: &HMCChain, mut out: impl Write) -> io::Result<()> {
    writeln!(out, "iteration,delta2,alpha,energy,accepted")?;
    for s in &chain.trace {
        writeln!(
            out,
            "{},{},{},{},{}",
            s.iteration, s.point[0], s.point[1], s.energy, s.accepted as u8
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian(q: [f64; 2]) -> Result<(f64, [f64; 2])> {
        Ok((0.5 * (q[0] * q[0] + q[1] * q[1]), q))
    }

    #[test]
    fn hamiltonian_parts() {
        let s = Phase {
            q: [1.0, 2.0],
            p: [0.0, 0.0],
        };
        assert_eq!(hamiltonian(&s, &gaussian).unwrap(), 2.5);
        let k1 = hamiltonian(&Phase { p: [0.3, -0.4], ..s }, &gaussian).unwrap() - 2.5;
        let k2 = hamiltonian(&Phase { p: [0.6, -0.8], ..s }, &gaussian).unwrap() - 2.5;
        assert!((k2 - 4.0 * k1).abs() < 1e-15);
    }

    #[test]
    fn zero_field_is_pure_drift() {
        let flat = |_q: [f64; 2]| Ok((0.0, [0.0, 0.0]));
        let s = Phase {
            q: [0.5, -1.0],
            p: [0.25, 2.0],
        };
        let e = leapfrog(s, 8, 0.125, &flat).unwrap();
        assert_eq!(e.p, s.p);
        assert_eq!(e.q, [0.5 + 8.0 * 0.125 * 0.25, -1.0 + 8.0 * 0.125 * 2.0]);
    }

    #[test]
    fn reversible() {
        let pot = |q: [f64; 2]| {
            let u = 0.25 * q[0].powi(4) + 0.5 * q[1] * q[1] + 0.3 * q[0] * q[1];
            Ok((u, [q[0].powi(3) + 0.3 * q[1], q[1] + 0.3 * q[0]]))
        };
        let s = Phase {
            q: [0.8, -0.4],
            p: [0.3, 1.1],
        };
        let mut e = leapfrog(s, 50, 0.05, &pot).unwrap();
        e.p = [-e.p[0], -e.p[1]];
        let back = leapfrog(e, 50, 0.05, &pot).unwrap();
        for k in 0..2 {
            assert!((back.q[k] - s.q[k]).abs() < 1e-10);
            assert!((back.p[k] + s.p[k]).abs() < 1e-10);
        }
    }

    #[test]
    fn harmonic_energy_error_stays_bounded() {
        let s0 = Phase {
            q: [1.0, 0.0],
            p: [0.0, 1.0],
        };
        let e0 = hamiltonian(&s0, &gaussian).unwrap();
        let mut s = s0;
        let mut worst = 0.0f64;
        let mut early = 0.0f64;
        for i in 0..10_000 {
            s = leapfrog(s, 1, 0.01, &gaussian).unwrap();
            let err = (hamiltonian(&s, &gaussian).unwrap() - e0).abs();
            worst = worst.max(err);
            if i < 1000 {
                early = early.max(err);
            }
        }
        // O(λ²) bound, and no growth after the first few periods
        assert!(worst < 1e-4);
        assert!(worst <= early * 1.01);
    }

    #[test]
    fn nonfinite_gradient_is_reported() {
        let bad = |q: [f64; 2]| Ok((0.0, [f64::NAN, q[1]]));
        let s = Phase {
            q: [0.0, 0.0],
            p: [1.0, 1.0],
        };
        assert!(matches!(leapfrog(s, 3, 0.1, &bad), Err(Error::NonFiniteGradient)));
    }

    #[test]
    fn standard_gaussian_moments() {
        let cfg = HMCConfig {
            n_samples: 5200,
            burn_in: 200,
            thinning: 1,
            n_leapfrog: 10,
            seed: 99,
            ..Default::default()
        };
        let chain = run_chain(&gaussian, [2.0, -2.0], &cfg).unwrap();
        assert_eq!(chain.samples.len(), 5000);
        let m = chain.mean();
        for k in 0..2 {
            let v = chain.samples.iter().map(|s| (s[k] - m[k]).powi(2)).sum::<f64>() / 4999.0;
            assert!(m[k].abs() < 0.05, "mean {m:?}");
            assert!((v - 1.0).abs() < 0.1, "var {v}");
        }
        assert!((0.6..=0.99).contains(&chain.accept_rate), "{}", chain.accept_rate);
    }

    #[test]
    fn deterministic_and_huge_steps_are_rejected() {
        let cfg = HMCConfig {
            n_samples: 300,
            burn_in: 50,
            seed: 5,
            ..Default::default()
        };
        let a = run_chain(&gaussian, [0.0, 0.0], &cfg).unwrap();
        let b = run_chain(&gaussian, [0.0, 0.0], &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.samples.len(), 125);
        let wild = HMCConfig {
            step_size: Some(1e3),
            ..cfg
        };
        match run_chain(&gaussian, [0.0, 0.0], &wild) {
            Err(Error::AllRejected { rate }) => assert!(rate < 0.01),
            Ok(c) => assert!(c.accept_rate < 0.05),
            Err(e) => panic!("{e}"),
        }
    }

    #[test]
    fn chain_csv_layout() {
        let cfg = HMCConfig {
            n_samples: 10,
            burn_in: 2,
            step_size: Some(0.2),
            ..Default::default()
        };
        let chain = run_chain(&gaussian, [0.1, 0.1], &cfg).unwrap();
        let mut buf = Vec::new();
        write_chain_csv(&chain, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "iteration,delta2,alpha,energy,accepted");
        assert_eq!(lines.len(), 11);
        assert!(lines[1].starts_with("0,"));
    }

    #[test]
    fn invalid_config() {
        let cfg = HMCConfig {
            burn_in: 1000,
            ..Default::default()
        };
        assert!(run_chain(&gaussian, [0.0, 0.0], &cfg).is_err());
    }
}

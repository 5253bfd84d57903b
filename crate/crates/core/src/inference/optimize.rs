use serde::{Deserialize, Serialize};

use super::Objective;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GdConfig {
    /// Stop once the sup-norm of the log-space gradient falls below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Armijo sufficient-decrease constant.
    pub armijo_c: f64,
    pub max_halvings: usize,
    /// Longest step allowed in log-parameter space.
    pub max_step: f64,
}

impl Default for GdConfig {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 500,
            armijo_c: 1e-4,
            max_halvings: 50,
            max_step: 3.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GdResult {
    pub theta: [f64; 2],
    pub value: f64,
    pub initial_value: f64,
    /// Sup-norm of the log-space gradient at `theta`.
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after each accepted step, starting with the initial value.
    pub trace: Vec<f64>,
}

fn sup(g: [f64; 2]) -> f64 {
    g[0].abs().max(g[1].abs())
}

fn log_grad(theta: [f64; 2], g: [f64; 2]) -> [f64; 2] {
    [theta[0] * g[0], theta[1] * g[1]]
}

/// Steepest descent on `(log δ², log α)` with Armijo backtracking.
///
/// The first trial step of each line search is the Barzilai–Borwein length
/// from the previous pair of iterates, capped at `max_step`.
pub fn gradient_descent(obj: &impl Objective, init: [f64; 2], cfg: &GdConfig) -> Result<GdResult> {
    if !(init[0] > 0.0 && init[1] > 0.0 && init.iter().all(|v| v.is_finite())) {
        return Err(Error::NonPositiveParam(init[0].min(init[1])));
    }
    let (f0, g0) = obj.value_grad(init)?;
    let mut x = [init[0].ln(), init[1].ln()];
    let mut f = f0;
    let mut g = log_grad(init, g0);
    if !f.is_finite() || !g.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFiniteGradient);
    }
    let mut trace = vec![f0];
    let mut lambda = 1.0 / sup(g).max(1.0);
    let mut iterations = 0;

    while iterations < cfg.max_iter && sup(g) >= cfg.tol {
        iterations += 1;
        let gnorm2 = g[0] * g[0] + g[1] * g[1];
        let mut step = lambda.min(cfg.max_step / gnorm2.sqrt());
        // rounding allowance so that steps at the noise floor are not rejected
        let slack = 1e-12 * (1.0 + f.abs());
        let mut accepted = None;
        for _ in 0..=cfg.max_halvings {
            let xt = [x[0] - step * g[0], x[1] - step * g[1]];
            let theta = [xt[0].exp(), xt[1].exp()];
            if let Ok((ft, gt)) = obj.value_grad(theta) {
                let gt = log_grad(theta, gt);
                let finite = ft.is_finite() && gt.iter().all(|v| v.is_finite());
                let decrease = cfg.armijo_c * step * gnorm2;
                let armijo = f - ft >= decrease;
                // below the rounding floor of f, fall back to the approximate Wolfe
                // conditions on the directional derivative
                let slope = gt[0] * g[0] + gt[1] * g[1];
                let noise_floor =
                    decrease < slack && ft <= f + slack && slope <= 0.9 * gnorm2 && slope >= -0.8 * gnorm2;
                if finite && (armijo || noise_floor) {
                    accepted = Some((xt, ft, gt));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((xn, fnew, gn)) = accepted else {
            return Err(Error::LineSearchFailed {
                point: [x[0].exp(), x[1].exp()],
                value: f,
                grad_norm: sup(g),
            });
        };
        let s = [xn[0] - x[0], xn[1] - x[1]];
        let yv = [gn[0] - g[0], gn[1] - g[1]];
        let sy = s[0] * yv[0] + s[1] * yv[1];
        let ss = s[0] * s[0] + s[1] * s[1];
        lambda = if sy > 0.0 { ss / sy } else { 2.0 * step };
        x = xn;
        f = fnew;
        g = gn;
        trace.push(f);
    }

    let theta = [x[0].exp(), x[1].exp()];
    if f > f0 {
        // slack accumulated past the start: fall back to the initial point
        return Ok(GdResult {
            theta: init,
            value: f0,
            initial_value: f0,
            grad_norm: sup(log_grad(init, g0)),
            iterations,
            converged: false,
            trace,
        });
    }
    Ok(GdResult {
        theta,
        value: f,
        initial_value: f0,
        grad_norm: sup(g),
        iterations,
        converged: sup(g) < cfg.tol,
        trace,
    })
}

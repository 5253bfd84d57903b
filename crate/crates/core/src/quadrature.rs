//! Gauss–Hermite quadrature and the logistic-normal integral.

use std::f64::consts::PI;
use std::sync::OnceLock;

pub const GH_POINTS: usize = 32;

/// Nodes and weights for `∫ f(x) e^{−x²} dx`. Nodes are sorted ascending and
/// exactly antisymmetric; weights sum to `√π`.
#[derive(Clone, Debug)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    /// Newton iteration on the orthonormal Hermite recurrence, seeded with the
    /// usual asymptotic root estimates.
    pub fn new(n: usize) -> Self {
        assert!(n >= 2, "need at least two nodes");
        let pim4 = PI.powf(-0.25);
        let half = n.div_ceil(2);
        let mut x = vec![0.0; n];
        let mut w = vec![0.0; n];
        let mut z = 0.0f64;
        for i in 0..half {
            z = match i {
                0 => (2.0 * n as f64 + 1.0).sqrt() - 1.85575 * (2.0 * n as f64 + 1.0).powf(-0.16667),
                1 => z - 1.14 * (n as f64).powf(0.426) / z,
                2 => 1.86 * z - 0.86 * x[0],
                3 => 1.91 * z - 0.91 * x[1],
                _ => 2.0 * z - x[i - 2],
            };
            let mut pp = 0.0;
            for _ in 0..100 {
                let mut p1 = pim4;
                let mut p2 = 0.0;
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
                }
                pp = (2.0 * n as f64).sqrt() * p2;
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            x[i] = z;
            x[n - 1 - i] = -z;
            w[i] = 2.0 / (pp * pp);
            w[n - 1 - i] = w[i];
        }
        if n % 2 == 1 {
            x[n / 2] = 0.0;
        }
        x.reverse();
        w.reverse();
        Self { nodes: x, weights: w }
    }

    pub fn standard() -> &'static GaussHermite {
        static RULE: OnceLock<GaussHermite> = OnceLock::new();
        RULE.get_or_init(|| GaussHermite::new(GH_POINTS))
    }
}

pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `log σ(t) = −log(1 + e^{−t})`, stable for large `|t|`.
pub fn log_sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        -(-t).exp().ln_1p()
    } else {
        t - t.exp().ln_1p()
    }
}

/// `E[σ(Z)]` for `Z ~ N(mean, var)`.
///
/// Uses `σ(t) = ½ + ½ tanh(t/2)` and sums symmetric node pairs, so the result
/// is odd-symmetric about `½` in `mean`.
pub fn logistic_gaussian_mean(mean: f64, var: f64) -> f64 {
    if var <= 0.0 {
        return sigmoid(mean);
    }
    let rule = GaussHermite::standard();
    let s = (2.0 * var).sqrt();
    let n = rule.nodes.len();
    let mut acc = 0.0;
    for i in 0..n / 2 {
        let x = rule.nodes[n - 1 - i];
        let w = rule.weights[n - 1 - i];
        acc += w * (((mean + s * x) * 0.5).tanh() + ((mean - s * x) * 0.5).tanh());
    }
    if n % 2 == 1 {
        acc += rule.weights[n / 2] * (mean * 0.5).tanh();
    }
    0.5 + 0.5 * acc / PI.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn rule_integrates_gaussian_moments() {
        let rule = GaussHermite::standard();
        let sum: f64 = rule.weights.iter().sum();
        assert!((sum - PI.sqrt()).abs() < 1e-13);
        // ∫ x² e^{−x²} = √π/2, ∫ x⁴ e^{−x²} = 3√π/4
        let m2: f64 = rule.nodes.iter().zip(&rule.weights).map(|(x, w)| w * x * x).sum();
        let m4: f64 = rule.nodes.iter().zip(&rule.weights).map(|(x, w)| w * x.powi(4)).sum();
        assert!((m2 - PI.sqrt() / 2.0).abs() < 1e-13);
        assert!((m4 - 3.0 * PI.sqrt() / 4.0).abs() < 1e-12);
        for i in 0..GH_POINTS {
            assert_eq!(rule.nodes[i], -rule.nodes[GH_POINTS - 1 - i]);
        }
        assert!(rule.nodes.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn small_rule_matches_known_nodes() {
        let r = GaussHermite::new(3);
        assert!((r.nodes[2] - 1.5f64.sqrt()).abs() < 1e-14);
        assert!((r.weights[1] - 2.0 * PI.sqrt() / 3.0).abs() < 1e-14);
    }

    #[test]
    fn log_sigmoid_is_stable() {
        assert!((log_sigmoid(0.0) - 0.5f64.ln()).abs() < 1e-16);
        assert!(log_sigmoid(800.0) == 0.0);
        assert!((log_sigmoid(-800.0) + 800.0).abs() < 1e-12);
        for t in [-20.0f64, -3.0, -0.1, 0.4, 5.0, 30.0] {
            let direct = (1.0 / (1.0 + (-t).exp())).ln();
            assert!((log_sigmoid(t) - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn predictor_special_cases() {
        for v in [0.01, 1.0, 9.0] {
            assert_eq!(logistic_gaussian_mean(0.0, v), 0.5);
        }
        assert_eq!(logistic_gaussian_mean(1.3, 0.0), sigmoid(1.3));
        for &(m, v) in &[(0.7, 2.0), (-2.2, 0.3), (2.9, 8.0)] {
            let a = logistic_gaussian_mean(m, v);
            let b = logistic_gaussian_mean(-m, v);
            assert!((a + b - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn predictor_matches_monte_carlo_at_unit_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 10_000_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let z: f64 = StandardNormal.sample(&mut rng);
            acc += sigmoid(1.0 + z);
        }
        let mc = acc / n as f64;
        assert!((logistic_gaussian_mean(1.0, 1.0) - mc).abs() < 1e-3);
    }
}

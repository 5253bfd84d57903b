//! Fisher-Rao geometry through the square-root embedding.
//!
//! A density `p` maps to `φ = √p`, a point on the positive part of the unit
//! sphere of L²([0, 1]). The Fisher-Rao distance between densities is twice
//! the great-circle distance between their square roots; all maps below work
//! with the unit-norm representative and the trapezoid inner product.

use serde::{Deserialize, Serialize};

use crate::density::{self, DensityOnGrid};
use crate::error::{Error, Result};

/// Below this norm a tangent vector (or geodesic angle) is treated as zero.
pub const TOL_ZERO: f64 = 1e-14;

const UNIT_NORM_TOL: f64 = 1e-8;
const TANGENCY_TOL: f64 = 1e-8;
const HEMISPHERE_TOL: f64 = 1e-10;

/// Unit-norm square-root density on the upper hemisphere.
#[derive(Clone, Debug, PartialEq)]
pub struct SpherePoint {
    phi: Vec<f64>,
}

impl SpherePoint {
    pub fn new(phi: Vec<f64>) -> Result<Self> {
        if phi.len() < density::MIN_GRID_SIZE {
            return Err(Error::InvalidInput(format!(
                "grid needs at least {} points, got {}",
                density::MIN_GRID_SIZE,
                phi.len()
            )));
        }
        if let Some(v) = phi.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "sphere point has invalid component {v}"
            )));
        }
        let n2 = density::inner(&phi, &phi);
        if (n2 - 1.0).abs() > UNIT_NORM_TOL {
            return Err(Error::InvalidInput(format!(
                "sphere point has squared norm {n2}, expected 1"
            )));
        }
        Ok(Self { phi })
    }

    /// The unity pole `1_H`, image of the uniform density.
    pub fn pole(m: usize) -> Self {
        Self { phi: vec![1.0; m] }
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    pub fn grid_size(&self) -> usize {
        self.phi.len()
    }
}

/// A vector in the tangent space of the sphere at `base`.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentVector {
    base: SpherePoint,
    vec: Vec<f64>,
}

impl TangentVector {
    pub fn new(base: SpherePoint, vec: Vec<f64>) -> Result<Self> {
        if vec.len() != base.grid_size() {
            return Err(Error::LengthMismatch {
                left: base.grid_size(),
                right: vec.len(),
            });
        }
        let dot = density::inner(&vec, base.phi());
        if dot.abs() > TANGENCY_TOL * density::norm(&vec).max(1.0) {
            return Err(Error::InvalidInput(format!(
                "vector is not tangent at its base (inner product {dot:e})"
            )));
        }
        Ok(Self { base, vec })
    }

    pub fn zero(base: SpherePoint) -> Self {
        let vec = vec![0.0; base.grid_size()];
        Self { base, vec }
    }

    pub fn base(&self) -> &SpherePoint {
        &self.base
    }

    pub fn vec(&self) -> &[f64] {
        &self.vec
    }

    pub fn norm(&self) -> f64 {
        density::norm(&self.vec)
    }
}

/// Element of the tangent space at the unity pole; the feature that the
/// covariance functions consume.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddedFeature {
    vec: Vec<f64>,
}

impl EmbeddedFeature {
    pub fn new(vec: Vec<f64>) -> Result<Self> {
        if vec.len() < density::MIN_GRID_SIZE {
            return Err(Error::InvalidInput(format!(
                "feature needs at least {} grid values",
                density::MIN_GRID_SIZE
            )));
        }
        let one = vec![1.0; vec.len()];
        let dot = density::inner(&vec, &one);
        if dot.abs() > TANGENCY_TOL * density::norm(&vec).max(1.0) {
            return Err(Error::InvalidInput(format!(
                "feature is not tangent at the pole (mean {dot:e})"
            )));
        }
        Ok(Self { vec })
    }

    pub fn vec(&self) -> &[f64] {
        &self.vec
    }

    pub fn grid_size(&self) -> usize {
        self.vec.len()
    }

    /// Trapezoid L² distance between two features.
    pub fn distance(&self, other: &Self) -> f64 {
        density::distance(&self.vec, &other.vec)
    }

    pub fn norm(&self) -> f64 {
        density::norm(&self.vec)
    }
}

pub fn to_sphere(p: &DensityOnGrid) -> SpherePoint {
    SpherePoint {
        phi: p.values().iter().map(|v| v.sqrt()).collect(),
    }
}

pub fn to_density(phi: &SpherePoint) -> Result<DensityOnGrid> {
    let sq: Vec<f64> = phi.phi.iter().map(|v| v * v).collect();
    density::normalize(&sq)
}

fn cos_angle(a: &[f64], b: &[f64]) -> f64 {
    density::inner(a, b).clamp(-1.0, 1.0)
}

// Angle between unit vectors as 2·atan2(|a − b|, |a + b|). Agrees with
// arccos⟨a, b⟩ but keeps full precision for nearby points and is exactly zero
// for identical ones.
fn angle(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let sum: Vec<f64> = a.iter().zip(b).map(|(x, y)| x + y).collect();
    2.0 * density::norm(&diff).atan2(density::norm(&sum))
}

/// Great-circle distance `arccos⟨φ₁, φ₂⟩`, in `[0, π]`.
pub fn geodesic_distance(a: &SpherePoint, b: &SpherePoint) -> f64 {
    angle(&a.phi, &b.phi)
}

/// Fisher-Rao distance computed with the radius-2 map `p ↦ 2√p`; equals twice
/// [`geodesic_distance`] of the unit-norm representatives.
pub fn fisher_rao_distance(p1: &DensityOnGrid, p2: &DensityOnGrid) -> f64 {
    let f1: Vec<f64> = p1.values().iter().map(|v| 2.0 * v.sqrt()).collect();
    let f2: Vec<f64> = p2.values().iter().map(|v| 2.0 * v.sqrt()).collect();
    // arc length on the sphere of radius 2
    let unit = |f: &[f64]| f.iter().map(|v| 0.5 * v).collect::<Vec<_>>();
    2.0 * angle(&unit(&f1), &unit(&f2))
}

// cos(|w|) φ + sin(|w|) w/|w| without any hemisphere check.
fn exp_raw(base: &[f64], w: &[f64]) -> Vec<f64> {
    let nw = density::norm(w);
    if nw < TOL_ZERO {
        return base.to_vec();
    }
    let (s, c) = nw.sin_cos();
    base.iter()
        .zip(w)
        .map(|(p, v)| c * p + s * v / nw)
        .collect()
}

// β/sin β (φ₂ − cos β φ₁), zero when β is below TOL_ZERO.
fn log_raw(from: &[f64], to: &[f64]) -> Vec<f64> {
    let cos = cos_angle(from, to);
    let beta = angle(from, to);
    if beta < TOL_ZERO {
        return vec![0.0; from.len()];
    }
    let k = beta / beta.sin();
    from.iter().zip(to).map(|(a, b)| k * (b - cos * a)).collect()
}

/// Exponential map at `w.base()`.
pub fn exp_map(w: &TangentVector) -> Result<SpherePoint> {
    let mut out = exp_raw(&w.base.phi, &w.vec);
    let min = out.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -HEMISPHERE_TOL {
        return Err(Error::LeavesHemisphere { min });
    }
    for v in out.iter_mut() {
        *v = v.max(0.0);
    }
    Ok(SpherePoint { phi: out })
}

/// Log map: the tangent vector at `from` pointing along the geodesic to `to`,
/// with length equal to their geodesic distance.
pub fn log_map(from: &SpherePoint, to: &SpherePoint) -> TangentVector {
    TangentVector {
        vec: log_raw(&from.phi, &to.phi),
        base: from.clone(),
    }
}

/// `Log₁(√p)`: the tangent-space feature at the unity pole.
pub fn embed(p: &DensityOnGrid) -> EmbeddedFeature {
    let phi = to_sphere(p);
    let one = vec![1.0; phi.grid_size()];
    EmbeddedFeature {
        vec: log_raw(&one, &phi.phi),
    }
}

/// Difference between the tangent-space chord at the pole and the true
/// geodesic distance; zero when either density is uniform.
pub fn isometry_defect(p1: &DensityOnGrid, p2: &DensityOnGrid) -> f64 {
    let chord = embed(p1).distance(&embed(p2));
    chord - geodesic_distance(&to_sphere(p1), &to_sphere(p2))
}

/// Transports `w` from its base point to `to` along the connecting geodesic.
pub fn parallel_transport(w: &TangentVector, to: &SpherePoint) -> Result<TangentVector> {
    let sum: Vec<f64> = w.base.phi.iter().zip(&to.phi).map(|(a, b)| a + b).collect();
    let n2 = density::inner(&sum, &sum);
    if n2.sqrt() < 1e-10 {
        return Err(Error::AntipodalPair);
    }
    let k = 2.0 * density::inner(&w.vec, &to.phi) / n2;
    let vec = w.vec.iter().zip(&sum).map(|(v, s)| v - k * s).collect();
    Ok(TangentVector {
        base: to.clone(),
        vec,
    })
}

pub const FRECHET_MAX_ITER: usize = 100;
pub const FRECHET_TOL: f64 = 1e-9;

/// Intrinsic (Karcher) mean by fixed-point gradient iterations on the sphere.
///
/// Starts from the normalized extrinsic average of the square roots. Iterates
/// are projected back onto the closed hemisphere.
pub fn frechet_mean(densities: &[DensityOnGrid], max_iter: usize, tol: f64) -> Result<DensityOnGrid> {
    let first = densities
        .first()
        .ok_or_else(|| Error::InvalidInput("Fréchet mean of an empty set".into()))?;
    let m = first.grid_size();
    if let Some(d) = densities.iter().find(|d| d.grid_size() != m) {
        return Err(Error::LengthMismatch {
            left: m,
            right: d.grid_size(),
        });
    }
    let points: Vec<SpherePoint> = densities.iter().map(to_sphere).collect();
    let n = points.len() as f64;

    let mut mu = vec![0.0; m];
    for p in &points {
        for (acc, v) in mu.iter_mut().zip(&p.phi) {
            *acc += v;
        }
    }
    project_to_sphere(&mut mu);

    let mut update_norm = f64::INFINITY;
    for _ in 0..max_iter {
        let mut step = vec![0.0; m];
        for p in &points {
            for (acc, v) in step.iter_mut().zip(log_raw(&mu, &p.phi)) {
                *acc += v / n;
            }
        }
        update_norm = density::norm(&step);
        if update_norm < tol {
            return to_density(&SpherePoint { phi: mu });
        }
        mu = exp_raw(&mu, &step);
        project_to_sphere(&mut mu);
    }
    if update_norm > 100.0 * tol {
        return Err(Error::NoConvergence {
            what: "Fréchet mean",
            iterations: max_iter,
            residual: update_norm,
        });
    }
    to_density(&SpherePoint { phi: mu })
}

fn project_to_sphere(v: &mut [f64]) {
    for x in v.iter_mut() {
        *x = x.max(0.0);
    }
    let n = density::norm(v);
    for x in v.iter_mut() {
        *x /= n;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{grid_points, normalize, DEFAULT_GRID_SIZE};
    use crate::datasets::beta_pdf;
    use crate::testing::beta_density;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const M: usize = DEFAULT_GRID_SIZE;

    fn random_beta(rng: &mut ChaCha8Rng) -> DensityOnGrid {
        beta_density(M, rng.random_range(1.5..10.0), rng.random_range(1.5..10.0))
    }

    fn random_tangent(rng: &mut ChaCha8Rng, base: &SpherePoint, len: f64) -> TangentVector {
        let a: f64 = rng.random_range(-1.0..1.0);
        let b: f64 = rng.random_range(-1.0..1.0);
        let raw: Vec<f64> = grid_points(M)
            .iter()
            .map(|t| a * (2.0 * std::f64::consts::PI * t).sin() + b * (6.0 * t).cos())
            .collect();
        let dot = density::inner(&raw, base.phi());
        let mut v: Vec<f64> = raw.iter().zip(base.phi()).map(|(r, p)| r - dot * p).collect();
        let n = density::norm(&v);
        for x in v.iter_mut() {
            *x *= len / n;
        }
        TangentVector::new(base.clone(), v).unwrap()
    }

    #[test]
    fn uniform_maps_to_pole() {
        let u = DensityOnGrid::uniform(M).unwrap();
        let phi = to_sphere(&u);
        assert!(phi.phi().iter().all(|v| (v - 1.0).abs() < 1e-15));
        assert!(embed(&u).vec().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn sphere_round_trip() {
        let p = beta_density(M, 2.0, 2.0);
        let phi = to_sphere(&p);
        let n2 = density::inner(phi.phi(), phi.phi());
        assert!((n2 - 1.0).abs() < 1e-8);
        for (k, v) in phi.phi().iter().enumerate() {
            assert_eq!(*v, p.values()[k].sqrt());
        }
        let back = to_density(&phi).unwrap();
        for (a, b) in back.values().iter().zip(p.values()) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!(SpherePoint::new(phi.phi().to_vec()).is_ok());
        assert!(SpherePoint::new(vec![2.0; M]).is_err());
    }

    #[test]
    fn distance_basic_properties() {
        let p = to_sphere(&beta_density(M, 3.0, 5.0));
        let q = to_sphere(&beta_density(M, 4.0, 2.0));
        assert_eq!(geodesic_distance(&p, &p), 0.0);
        assert_eq!(geodesic_distance(&p, &q), geodesic_distance(&q, &p));
    }

    #[test]
    fn uniform_to_beta22_matches_dense_quadrature() {
        // ∫√(6t(1−t)) dt = √6 · B(3/2, 3/2) = √6 · π/8
        let exact = (6f64.sqrt() * std::f64::consts::PI / 8.0).acos();
        let u = to_sphere(&DensityOnGrid::uniform(M).unwrap());
        // a 512 grid on √(t(1−t)) converges slowly at the endpoints
        let b = to_sphere(&beta_density(M, 2.0, 2.0));
        let d = geodesic_distance(&u, &b);
        assert!((d - exact).abs() < 1e-3, "{d} vs {exact}");
        let fine = 100_000;
        let bf = to_sphere(&DensityOnGrid::from_fn(fine, |t| beta_pdf(2.0, 2.0, t)).unwrap());
        let uf = SpherePoint::pole(fine);
        assert!((geodesic_distance(&uf, &bf) - exact).abs() < 1e-6);
    }

    #[test]
    fn exp_of_zero_is_base_and_log_of_self_is_zero() {
        let p = to_sphere(&beta_density(M, 2.5, 4.0));
        let z = TangentVector::zero(p.clone());
        assert_eq!(exp_map(&z).unwrap(), p);
        assert!(log_map(&p, &p).vec().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn exp_log_round_trip_and_radial_isometry() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let a = to_sphere(&random_beta(&mut rng));
            let b = to_sphere(&random_beta(&mut rng));
            let w = log_map(&a, &b);
            assert!((w.norm() - geodesic_distance(&a, &b)).abs() < 1e-8);
            assert!(density::inner(w.vec(), a.phi()).abs() < 1e-8);
            let back = exp_map(&w).unwrap();
            let err = back
                .phi()
                .iter()
                .zip(b.phi())
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max);
            assert!(err < 1e-8, "round trip error {err}");
        }
        // radial isometry for a tangent vector built directly
        let base = to_sphere(&DensityOnGrid::uniform(M).unwrap());
        for len in [0.05, 0.2, 0.4] {
            let w = random_tangent(&mut rng, &base, len);
            let q = exp_map(&w).unwrap();
            assert!((geodesic_distance(&base, &q) - len).abs() < 1e-8);
        }
    }

    #[test]
    fn exp_far_from_base_leaves_hemisphere() {
        let base = SpherePoint::pole(M);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = random_tangent(&mut rng, &base, 3.0);
        assert!(matches!(exp_map(&w), Err(Error::LeavesHemisphere { .. })));
    }

    #[test]
    fn embedding_norm_is_distance_to_pole() {
        let p = beta_density(M, 3.0, 7.0);
        let pole = SpherePoint::pole(M);
        let e = embed(&p);
        assert!((e.norm() - geodesic_distance(&pole, &to_sphere(&p))).abs() < 1e-12);
        assert!(EmbeddedFeature::new(e.vec().to_vec()).is_ok());
    }

    #[test]
    fn embedding_defect_vanishes_near_the_pole() {
        let u = DensityOnGrid::uniform(M).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let toward = |p: &DensityOnGrid, eps: f64| {
            let v: Vec<f64> = p.values().iter().map(|x| (1.0 - eps) + eps * x).collect();
            normalize(&v).unwrap()
        };
        for _ in 0..10 {
            let p1 = random_beta(&mut rng);
            let p2 = random_beta(&mut rng);
            assert!(isometry_defect(&u, &p1).abs() < 1e-12);
            let rel = |eps: f64| {
                let (a, b) = (toward(&p1, eps), toward(&p2, eps));
                isometry_defect(&a, &b).abs() / geodesic_distance(&to_sphere(&a), &to_sphere(&b))
            };
            let (far, near) = (rel(0.5), rel(0.05));
            assert!(near < far && near < 1e-2, "{near} {far}");
        }
    }

    #[test]
    fn factor_two_convention() {
        let p1 = beta_density(M, 2.0, 6.0);
        let p2 = beta_density(M, 5.0, 3.0);
        let dh = geodesic_distance(&to_sphere(&p1), &to_sphere(&p2));
        assert!((dh - 0.5 * fisher_rao_distance(&p1, &p2)).abs() < 1e-12);
    }

    #[test]
    fn parallel_transport_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let a = to_sphere(&random_beta(&mut rng));
            let b = to_sphere(&random_beta(&mut rng));
            let w1 = random_tangent(&mut rng, &a, 0.7);
            let w2 = random_tangent(&mut rng, &a, 0.4);
            let t1 = parallel_transport(&w1, &b).unwrap();
            let t2 = parallel_transport(&w2, &b).unwrap();
            assert!((t1.norm() - w1.norm()).abs() < 1e-8);
            assert!(density::inner(t1.vec(), b.phi()).abs() < 1e-8);
            let before = density::inner(w1.vec(), w2.vec());
            let after = density::inner(t1.vec(), t2.vec());
            assert!((before - after).abs() < 1e-8);
            // identity transport
            let same = parallel_transport(&w1, &a).unwrap();
            for (x, y) in same.vec().iter().zip(w1.vec()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn transport_to_antipode_fails() {
        let m = 5;
        let base = SpherePoint::new(vec![0.0, 0.0, 0.0, 0.0, 8f64.sqrt()]).unwrap();
        // the antipode is not on the upper hemisphere, so build it unchecked
        let anti = SpherePoint {
            phi: base.phi().iter().map(|v| -v).collect(),
        };
        let w = TangentVector::zero(base);
        assert_eq!(m, anti.grid_size());
        assert_eq!(parallel_transport(&w, &anti), Err(Error::AntipodalPair));
    }

    #[test]
    fn frechet_mean_examples() {
        let p = beta_density(M, 2.0, 5.0);
        let single = frechet_mean(std::slice::from_ref(&p), FRECHET_MAX_ITER, FRECHET_TOL).unwrap();
        for (a, b) in single.values().iter().zip(p.values()) {
            assert!((a - b).abs() < 1e-10);
        }
        let same = frechet_mean(&[p.clone(), p.clone(), p.clone()], FRECHET_MAX_ITER, FRECHET_TOL).unwrap();
        for (a, b) in same.values().iter().zip(p.values()) {
            assert!((a - b).abs() < 1e-10);
        }
        let q = beta_density(M, 6.0, 2.0);
        let mid = to_sphere(&frechet_mean(&[p.clone(), q.clone()], FRECHET_MAX_ITER, FRECHET_TOL).unwrap());
        let d1 = geodesic_distance(&mid, &to_sphere(&p));
        let d2 = geodesic_distance(&mid, &to_sphere(&q));
        assert!((d1 - d2).abs() < 1e-8, "{d1} vs {d2}");
        assert!(frechet_mean(&[], 10, 1e-9).is_err());
    }

    #[test]
    fn frechet_mean_reports_non_convergence() {
        let p = beta_density(M, 2.0, 5.0);
        let q = beta_density(M, 6.0, 2.0);
        let r = beta_density(M, 3.0, 3.0);
        let err = frechet_mean(&[p, q, r], 1, 1e-15).unwrap_err();
        assert!(matches!(err, Error::NoConvergence { .. }));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]
            #[test]
            fn triangle_inequality(
                a in (1.5f64..10.0, 1.5f64..10.0),
                b in (1.5f64..10.0, 1.5f64..10.0),
                c in (1.5f64..10.0, 1.5f64..10.0),
            ) {
                let m = 129;
                let x = to_sphere(&beta_density(m, a.0, a.1));
                let y = to_sphere(&beta_density(m, b.0, b.1));
                let z = to_sphere(&beta_density(m, c.0, c.1));
                let xy = geodesic_distance(&x, &y);
                let yz = geodesic_distance(&y, &z);
                let xz = geodesic_distance(&x, &z);
                prop_assert!(xz <= xy + yz + 1e-12);
                prop_assert_eq!(xy, geodesic_distance(&y, &x));
            }
        }
    }
}

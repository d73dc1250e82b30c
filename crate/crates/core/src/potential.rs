//! Green functions of homogeneous lifts, sampling of the maximal entropy
//! measure by random backward orbits, and Lyapunov exponent estimators.

use num_complex::Complex64 as C;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::family::{FamilyError, Map, MapFamily, Param, Point1};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PotentialError {
    #[error("lift vector must be nonzero and finite")]
    ZeroLift,
    #[error("lift is degenerate along the orbit (|F| = {norm:e} at step {step})")]
    DegenerateLift { norm: f64, step: usize },
    #[error("preimage computation failed: {0}")]
    PreimageFailure(FamilyError),
    #[error(transparent)]
    Family(#[from] FamilyError),
}

/// A nonzero vector of C^2 stored as a unit sup-norm direction and a log scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LiftVector {
    pub u: C,
    pub v: C,
    pub log_scale: f64,
}

impl LiftVector {
    pub fn new(u: C, v: C) -> Result<Self, PotentialError> {
        let s = u.norm().max(v.norm());
        if !(s > 0.0) || !s.is_finite() {
            return Err(PotentialError::ZeroLift);
        }
        Ok(LiftVector { u: u / s, v: v / s, log_scale: s.ln() })
    }

    /// The standard lift `(z, 1)` of a finite point, `(1, 0)` of infinity.
    pub fn of_point(p: Point1) -> Self {
        match p {
            Point1::Finite(z) => LiftVector::new(z, C::new(1.0, 0.0)).expect("(z, 1) is nonzero"),
            Point1::Infinity => LiftVector { u: C::new(1.0, 0.0), v: C::new(0.0, 0.0), log_scale: 0.0 },
        }
    }

    /// `t * self`.
    pub fn scaled(&self, t: C) -> Self {
        let phase = t / t.norm();
        LiftVector { u: self.u * phase, v: self.v * phase, log_scale: self.log_scale + t.norm().ln() }
    }

    /// `F(self)`.
    pub fn image(&self, map: &Map) -> Result<Self, PotentialError> {
        let (fu, fv) = map.lift(self.u, self.v);
        let mut out = LiftVector::new(fu, fv)?;
        out.log_scale += map.degree() as f64 * self.log_scale;
        Ok(out)
    }

    /// The vector itself (may overflow for large scales).
    pub fn to_pair(&self) -> (C, C) {
        let s = self.log_scale.exp();
        (self.u * s, self.v * s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GreenValue {
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub const GREEN_MAX_ITER: usize = 200;
pub const DEFAULT_GREEN_TOL: f64 = 1e-14;

/// `G_F(v) = lim d^{-n} log |F^n(v)|` by the renormalized telescoping sum
/// `log_scale + sum_n d^{-(n+1)} log |F(x_n)|`, each `x_n` of unit sup-norm.
///
/// Stops once the tail bound `d^{-(n+1)} M / (d-1)` drops below `tol`, where
/// `M` bounds the observed `|log |F(x)||` together with the coefficient bound.
pub fn green_at(map: &Map, v: &LiftVector, tol: f64) -> Result<GreenValue, PotentialError> {
    let d = map.degree() as f64;
    let upper = map
        .numerator()
        .iter()
        .map(|a| a.norm())
        .sum::<f64>()
        .max(map.denominator().iter().map(|a| a.norm()).sum::<f64>())
        .ln()
        .abs();
    let mut mhat = upper;
    let (mut u, mut w) = (v.u, v.v);
    let mut value = v.log_scale;
    let mut weight = 1.0 / d;
    let mut iterations = 0;
    let mut converged = false;
    for step in 0..GREEN_MAX_ITER {
        let (fu, fw) = map.lift(u, w);
        let s2 = fu.norm_sqr().max(fw.norm_sqr());
        let s = s2.sqrt();
        if !(s >= 1e-300) || !s.is_finite() {
            return Err(PotentialError::DegenerateLift { norm: s, step });
        }
        let l = s.ln();
        value += weight * l;
        mhat = mhat.max(l.abs());
        let inv = 1.0 / s;
        u = fu * inv;
        w = fw * inv;
        iterations = step + 1;
        if weight * mhat / (d - 1.0) < tol {
            converged = true;
            break;
        }
        weight /= d;
    }
    Ok(GreenValue { value, iterations, converged })
}

/// Green value of the `j`-th marked critical point's standard lift.
pub fn critical_green(map: &Map, j: usize, tol: f64) -> Result<f64, PotentialError> {
    let cps = map.marked_critical_points()?;
    let cp = cps[j];
    Ok(green_at(map, &LiftVector::of_point(cp.location), tol)?.value * cp.multiplicity as f64)
}

/// `sum_j mult_j G(c_j~)` over the marked critical points.
pub fn critical_green_sum_map(map: &Map, tol: f64) -> Result<f64, PotentialError> {
    let mut total = 0.0;
    for cp in map.marked_critical_points()? {
        total += cp.multiplicity as f64 * green_at(map, &LiftVector::of_point(cp.location), tol)?.value;
    }
    Ok(total)
}

pub fn critical_green_sum(family: &MapFamily, lambda: &Param) -> Result<f64, PotentialError> {
    critical_green_sum_map(&family.at(lambda)?, DEFAULT_GREEN_TOL)
}

/// Lyapunov exponent of a polynomial from its critical Green values,
/// `log d + sum_j G(c_j)`.
pub fn lyapunov_from_green(map: &Map, tol: f64) -> Result<f64, PotentialError> {
    Ok((map.degree() as f64).ln() + critical_green_sum_map(map, tol)?)
}

/// Fixed start of every backward orbit.
pub const SAMPLE_START: C = C::new(1.0, 1.0);

/// Counter-based stream: the generator for sample `index` depends only on
/// `(seed, index)`.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn backward_orbit(map: &Map, depth: usize, rng: &mut ChaCha8Rng) -> Result<C, PotentialError> {
    let d = map.degree();
    let mut z = SAMPLE_START;
    for _ in 0..depth {
        let k = rng.gen_range(0..d);
        z = match map.unicritical_preimage(z, k) {
            Some(w) => w,
            None => {
                let pre = map.preimages(z).map_err(PotentialError::PreimageFailure)?;
                pre[k]
            }
        };
    }
    Ok(z)
}

/// Endpoints of `n_points` random backward orbits of length `depth` from `1 + i`.
pub fn sample_mu_f(map: &Map, n_points: usize, depth: usize, seed: u64) -> Result<Vec<C>, PotentialError> {
    (0..n_points)
        .into_par_iter()
        .map(|i| backward_orbit(map, depth, &mut sample_rng(seed, i as u64)))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovEstimate {
    pub value: f64,
    pub stderr: f64,
    pub n_points: usize,
    /// Samples redrawn because they fell within `1e-12` of a critical point.
    pub rejected: usize,
}

const CRITICAL_REJECT: f64 = 1e-12;

fn log_derivative(map: &Map, z: C) -> f64 {
    let (fz, dz) = map.eval_deriv(z);
    let mut l = dz.norm().ln();
    if !map.is_polynomial() {
        // spherical metric
        l += (1.0 + z.norm_sqr()).ln() - (1.0 + fz.norm_sqr()).ln();
    }
    l
}

/// Monte Carlo estimate of `int log |f'| d mu_f` over backward-orbit samples.
pub fn lyapunov_mc_map(
    map: &Map,
    n_points: usize,
    depth: usize,
    seed: u64,
) -> Result<LyapunovEstimate, PotentialError> {
    assert!(n_points >= 2, "need at least two samples");
    let crit = map.finite_critical_points();
    let draws: Vec<(f64, usize)> = (0..n_points)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(seed, i as u64);
            let mut rejected = 0;
            loop {
                let z = backward_orbit(map, depth, &mut rng)?;
                if crit.iter().any(|c| (z - c).norm() < CRITICAL_REJECT) {
                    rejected += 1;
                    continue;
                }
                return Ok((log_derivative(map, z), rejected));
            }
        })
        .collect::<Result<_, PotentialError>>()?;
    let n = draws.len() as f64;
    let mean = draws.iter().map(|x| x.0).sum::<f64>() / n;
    let var = draws.iter().map(|x| (x.0 - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(LyapunovEstimate {
        value: mean,
        stderr: (var / n).sqrt(),
        n_points: draws.len(),
        rejected: draws.iter().map(|x| x.1).sum(),
    })
}

pub fn lyapunov_mc(
    family: &MapFamily,
    lambda: &Param,
    n_points: usize,
    depth: usize,
    seed: u64,
) -> Result<LyapunovEstimate, PotentialError> {
    lyapunov_mc_map(&family.at(lambda)?, n_points, depth, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C {
        C::new(re, im)
    }

    fn quad(cval: C) -> Map {
        MapFamily::unicritical(2).unwrap().at(&Param::one(cval)).unwrap()
    }

    #[test]
    fn green_of_pure_square() {
        let m = quad(c(0., 0.));
        let v = LiftVector::new(c(2., 0.), c(1., 0.)).unwrap();
        assert!((v.u - c(1., 0.)).norm() < 1e-16 && (v.v - c(0.5, 0.)).norm() < 1e-16);
        assert!((v.log_scale - 2f64.ln()).abs() < 1e-16);
        let g = green_at(&m, &v, 1e-14).unwrap();
        assert!(g.converged);
        assert!((g.value - 2f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn green_homogeneity_and_functional_equation() {
        let m = quad(c(-2., 0.));
        let v = LiftVector::new(c(0.7, -1.3), c(0.4, 0.2)).unwrap();
        let tol = 1e-13;
        let g = green_at(&m, &v, tol).unwrap().value;
        let g3 = green_at(&m, &v.scaled(c(3., 0.)), tol).unwrap().value;
        assert!((g3 - g - 3f64.ln()).abs() < 10.0 * tol);
        let gf = green_at(&m, &v.image(&m).unwrap(), tol).unwrap().value;
        assert!((gf - 2.0 * g).abs() < 10.0 * tol);
    }

    #[test]
    fn zero_lift_rejected() {
        assert_eq!(LiftVector::new(c(0., 0.), c(0., 0.)), Err(PotentialError::ZeroLift));
    }

    #[test]
    fn critical_green_examples() {
        let quad_family = MapFamily::unicritical(2).unwrap();
        assert!(critical_green_sum(&quad_family, &Param::one(c(0., 0.))).unwrap().abs() < 1e-13);
        // G_c(0) = G_c(c)/2 ~ (1/2) log |c|
        let big = 1e4;
        let g = critical_green_sum(&quad_family, &Param::one(c(big, 0.))).unwrap();
        assert!((g - 0.5 * big.ln()).abs() < 0.01 * 0.5 * big.ln());
        // the critical value grows like log |c|
        let m = quad(c(big, 0.));
        let gv = green_at(&m, &LiftVector::of_point(Point1::Finite(c(big, 0.))), 1e-14).unwrap().value;
        assert!((gv - big.ln()).abs() < 0.01 * big.ln());

        let bh3 = MapFamily::branner_hubbard(3).unwrap();
        assert!(critical_green_sum(&bh3, &Param(vec![c(0., 0.), c(0., 0.)])).unwrap().abs() < 1e-13);
    }

    #[test]
    fn samples_of_circle_and_segment() {
        let pts = sample_mu_f(&quad(c(0., 0.)), 2000, 30, 7).unwrap();
        assert!(pts.iter().all(|z| (z.norm() - 1.0).abs() < 1e-6));
        let mean: f64 = pts.iter().map(|z| z.norm().ln()).sum::<f64>() / pts.len() as f64;
        assert!(mean.abs() < 2.0 / (pts.len() as f64).sqrt());

        let pts = sample_mu_f(&quad(c(-2., 0.)), 2000, 30, 7).unwrap();
        for z in &pts {
            assert!(z.re >= -2.0 - 1e-6 && z.re <= 2.0 + 1e-6 && z.im.abs() <= 1e-6, "{z}");
        }
    }

    #[test]
    fn samples_are_deterministic_across_thread_pools() {
        let m = quad(c(-0.12, 0.75));
        let a = sample_mu_f(&m, 500, 25, 99).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| sample_mu_f(&m, 500, 25, 99).unwrap());
        assert_eq!(a, b);
        let c2 = sample_mu_f(&m, 500, 25, 100).unwrap();
        assert_ne!(a, c2);
    }

    #[test]
    fn lyapunov_of_square_map() {
        let est = lyapunov_mc_map(&quad(c(0., 0.)), 20_000, 30, 1).unwrap();
        assert!((est.value - 2f64.ln()).abs() < 1e-3);
    }

    #[test]
    fn lyapunov_branner_hubbard_matches_green_route() {
        let bh3 = MapFamily::branner_hubbard(3).unwrap();
        let m = bh3.at(&Param(vec![c(0.4, 0.3), c(0.6, -0.2)])).unwrap();
        let est = lyapunov_mc_map(&m, 20_000, 30, 5).unwrap();
        let exact = lyapunov_from_green(&m, 1e-14).unwrap();
        assert!((est.value - exact).abs() < 4.0 * est.stderr + 1e-3, "{est:?} vs {exact}");
        assert!(est.value >= 3f64.ln() / 2.0 - 3.0 * est.stderr);
    }

    #[test]
    fn lyapunov_rational_margulis_ruelle() {
        use crate::family::{LambdaPoly, RationalSpec};
        let spec = RationalSpec {
            param_dim: 1,
            numerator: vec![
                LambdaPoly::constant(c(0.2, 0.)),
                LambdaPoly::constant(c(0., 0.)),
                LambdaPoly::constant(c(1., 0.)),
            ],
            denominator: vec![
                LambdaPoly::constant(c(1., 0.)),
                LambdaPoly::constant(c(0.3, 0.)),
                LambdaPoly::constant(c(0.1, 0.)),
            ],
        };
        let fam = MapFamily::rational(2, spec).unwrap();
        let est = lyapunov_mc(&fam, &Param::one(c(0., 0.)), 5_000, 30, 3).unwrap();
        assert!(est.value >= 2f64.ln() / 2.0 - 3.0 * est.stderr, "{est:?}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn green_identities_random(cre in -2.5f64..1.5, cim in -2.0f64..2.0,
                                   ure in -2.0f64..2.0, uim in -2.0f64..2.0,
                                   vre in -2.0f64..2.0, vim in -2.0f64..2.0,
                                   tre in 0.1f64..5.0, targ in 0.0f64..6.28) {
            prop_assume!(ure.abs() + uim.abs() + vre.abs() + vim.abs() > 1e-3);
            let m = quad(c(cre, cim));
            let v = LiftVector::new(c(ure, uim), c(vre, vim)).unwrap();
            let tol = 1e-13;
            let g = green_at(&m, &v, tol).unwrap().value;
            let t = C::from_polar(tre, targ);
            let gt = green_at(&m, &v.scaled(t), tol).unwrap().value;
            prop_assert!((gt - g - tre.ln()).abs() <= 10.0 * tol);
            let gf = green_at(&m, &v.image(&m).unwrap(), tol).unwrap().value;
            prop_assert!((gf - 2.0 * g).abs() <= 10.0 * tol);
        }

        #[test]
        fn green_nonnegative_and_vanishes_on_bounded_orbits(cre in -2.5f64..1.5, cim in -2.0f64..2.0,
                                                            zre in -2.0f64..2.0, zim in -2.0f64..2.0) {
            let m = quad(c(cre, cim));
            let z = c(zre, zim);
            let g = green_at(&m, &LiftVector::of_point(Point1::Finite(z)), 1e-14).unwrap().value;
            prop_assert!(g >= -1e-13);
            let orbit = m.orbit(z, 2000);
            if orbit.escaped_at.is_none() {
                prop_assert!(g.abs() < 1e-12, "bounded orbit with G = {}", g);
            } else {
                prop_assert!(g > -1e-13);
            }
        }
    }
}

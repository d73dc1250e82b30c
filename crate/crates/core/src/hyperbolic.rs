//! Continuation of repelling cycles along parameter paths, certified inverse
//! branches, derivative distortion along moved orbits, linearization of
//! expanding germ chains, and model Cantor hyperbolic sets.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::family::{FamilyError, Map, MapFamily, Param};
use crate::series::Series;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HyperbolicError {
    #[error("orbit lost hyperbolicity at t = {t}: per-step |f'| = {deriv}")]
    LostHyperbolicity { t: f64, deriv: f64 },
    #[error("continuation step fell below the floor at t = {t}")]
    StepFloorReached { t: f64 },
    #[error("inverse branch landed {distance:e} from the anchor, beyond {bound:e}")]
    BranchAmbiguity { distance: f64, bound: f64 },
    #[error("target is {distance:e} from f(anchor), outside the certified radius {eta:e}")]
    OutsideDisk { distance: f64, eta: f64 },
    #[error("no expanding disk at this point (|f'| = {deriv})")]
    NotExpanding { deriv: f64 },
    #[error("point is not periodic with period <= {max_period}")]
    NotPeriodic { max_period: usize },
    #[error("generator disks {0} and {1} intersect")]
    OverlapError(usize, usize),
    #[error("the image of generator disk {0} does not cover every disk")]
    CoverageError(usize),
    #[error("composed series diverged after {retries} radius halvings")]
    ChainDivergence { retries: usize },
    #[error(transparent)]
    Family(#[from] FamilyError),
}

type Result<T> = std::result::Result<T, HyperbolicError>;

pub const MAX_DETECT_PERIOD: usize = 64;

/// Smallest `p <= 64` with `|f^p(w) - w| <= 1e-9 max(1, |w|)`.
pub fn detect_period(map: &Map, w: C) -> Option<usize> {
    let tol = 1e-9 * w.norm().max(1.0);
    let mut z = w;
    for p in 1..=MAX_DETECT_PERIOD {
        z = map.eval(z);
        if (z - w).norm() <= tol {
            return Some(p);
        }
    }
    None
}

/// The cycle through `w`, starting at `w`.
pub fn cycle_through(map: &Map, w: C) -> Result<Vec<C>> {
    let p = detect_period(map, w).ok_or(HyperbolicError::NotPeriodic { max_period: MAX_DETECT_PERIOD })?;
    Ok(map.orbit(w, p - 1).points)
}

// ---------------------------------------------------------------------------
// continuation

pub const DEFAULT_DELTA: f64 = 0.05;
const STEP_FLOOR: f64 = 1e-12;
const CORRECTOR_MAX: usize = 5;

#[derive(Clone, Debug, PartialEq)]
pub struct TrackRequest {
    pub base: Param,
    pub target: Param,
    /// A cycle `x_0 .. x_{p-1}` with `f(x_{p-1}) = x_0`.
    pub orbit: Vec<C>,
    pub steps: usize,
    pub delta: f64,
}

impl TrackRequest {
    pub fn new(base: Param, target: Param, orbit: Vec<C>) -> Self {
        TrackRequest { base, target, orbit, steps: 16, delta: DEFAULT_DELTA }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrbitTrack {
    pub base_param: Param,
    /// Accepted parameters, from base to target.
    pub path: Vec<Param>,
    pub base_points: Vec<C>,
    pub moved_points: Vec<C>,
    pub base_log_deriv: Vec<f64>,
    pub moved_log_deriv: Vec<f64>,
    /// Smallest per-step `|f'|` seen along the path.
    pub k_track: f64,
    /// `max_k |f(moved_k) - moved_{k+1}|` at the target.
    pub residual: f64,
}

fn cycle_residual(map: &Map, x: &[C]) -> Vec<C> {
    let p = x.len();
    (0..p).map(|i| map.eval(x[i]) - x[(i + 1) % p]).collect()
}

fn cycle_jacobian(map: &Map, x: &[C]) -> DMatrix<C> {
    let p = x.len();
    let mut j = DMatrix::from_element(p, p, C::new(0.0, 0.0));
    for i in 0..p {
        j[(i, i)] += map.deriv(x[i]);
        j[(i, (i + 1) % p)] -= C::new(1.0, 0.0);
    }
    j
}

fn solve(j: DMatrix<C>, rhs: Vec<C>) -> Option<Vec<C>> {
    let b = DVector::from_vec(rhs);
    j.lu().solve(&b).map(|v| v.iter().copied().collect())
}

fn min_deriv(map: &Map, x: &[C]) -> f64 {
    x.iter().map(|&z| map.deriv(z).norm()).fold(f64::INFINITY, f64::min)
}

/// Newton on the cycle equations; `Some(iterations)` on convergence within `cap`.
fn correct(map: &Map, x: &mut [C], cap: usize) -> Option<usize> {
    let scale = x.iter().map(|z| z.norm()).fold(1.0, f64::max);
    for it in 1..=cap {
        let g: Vec<C> = cycle_residual(map, x).into_iter().map(|v| -v).collect();
        let dx = solve(cycle_jacobian(map, x), g)?;
        let mut step = 0.0_f64;
        for (xi, d) in x.iter_mut().zip(&dx) {
            *xi += d;
            step = step.max(d.norm());
        }
        if !step.is_finite() {
            return None;
        }
        if step <= 1e-13 * scale {
            return Some(it);
        }
    }
    None
}

/// Predictor–corrector continuation of a repelling cycle along the segment
/// from `base` to `target`.
pub fn continue_orbit(family: &MapFamily, req: &TrackRequest) -> Result<OrbitTrack> {
    assert!(!req.orbit.is_empty(), "orbit must be nonempty");
    let map0 = family.at(&req.base)?;
    let k0 = min_deriv(&map0, &req.orbit);
    if k0 < 1.0 + req.delta {
        return Err(HyperbolicError::LostHyperbolicity { t: 0.0, deriv: k0 });
    }
    let log_deriv = |map: &Map, x: &[C]| x.iter().map(|&z| map.deriv(z).norm().ln()).collect::<Vec<_>>();
    let base_log_deriv = log_deriv(&map0, &req.orbit);
    if req.base == req.target {
        return Ok(OrbitTrack {
            base_param: req.base.clone(),
            path: vec![req.base.clone()],
            base_points: req.orbit.clone(),
            moved_points: req.orbit.clone(),
            base_log_deriv: base_log_deriv.clone(),
            moved_log_deriv: base_log_deriv,
            k_track: k0,
            residual: cycle_residual(&map0, &req.orbit).iter().map(|v| v.norm()).fold(0.0, f64::max),
        });
    }

    let at = |t: f64| req.base.lerp(&req.target, t);
    let h0 = 1.0 / req.steps.max(1) as f64;
    let fd = 1e-6;
    let mut x = req.orbit.clone();
    let mut t = 0.0;
    let mut h = h0;
    let mut k_track = k0;
    let mut path = vec![req.base.clone()];
    let mut map_t = map0.clone();
    while t < 1.0 {
        let h_try = h.min(1.0 - t);
        // tangent: J dx/dt = -dG/dt
        let (mp, mm) = (family.at(&at(t + fd))?, family.at(&at(t - fd))?);
        let dgdt: Vec<C> = x.iter().map(|&z| -(mp.eval(z) - mm.eval(z)) / (2.0 * fd)).collect();
        let tangent = solve(cycle_jacobian(&map_t, &x), dgdt);
        let mut trial: Vec<C> = match &tangent {
            Some(v) => x.iter().zip(v).map(|(a, b)| a + b * h_try).collect(),
            None => x.clone(),
        };
        let t_new = if h_try >= 1.0 - t { 1.0 } else { t + h_try };
        let map_new = family.at(&at(t_new))?;
        match correct(&map_new, &mut trial, CORRECTOR_MAX) {
            Some(iters) => {
                let k = min_deriv(&map_new, &trial);
                if k < 1.0 + req.delta / 2.0 {
                    return Err(HyperbolicError::LostHyperbolicity { t: t_new, deriv: k });
                }
                k_track = k_track.min(k);
                x = trial;
                t = t_new;
                map_t = map_new;
                path.push(at(t));
                if iters <= 2 {
                    h = (2.0 * h).min(h0);
                }
            }
            None => {
                h /= 2.0;
                if h < STEP_FLOOR {
                    return Err(HyperbolicError::StepFloorReached { t });
                }
            }
        }
    }
    let _ = correct(&map_t, &mut x, 3);
    let residual = cycle_residual(&map_t, &x).iter().map(|v| v.norm()).fold(0.0, f64::max);
    Ok(OrbitTrack {
        base_param: req.base.clone(),
        path,
        base_points: req.orbit.clone(),
        moved_log_deriv: log_deriv(&map_t, &x),
        moved_points: x,
        base_log_deriv,
        k_track,
        residual,
    })
}

// ---------------------------------------------------------------------------
// inverse branches

const BOUNDARY_SAMPLES: usize = 64;

/// Certificate for the inverse branch of `f` through `anchor`: on
/// `D(anchor, 2 radius)` the sampled `|f'|` lies in `[k, b]`, and targets
/// within `eta = k radius` of `f(anchor)` have preimages within `radius`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InverseBranchSpec {
    pub anchor: C,
    pub center: C,
    pub radius: f64,
    pub eta: f64,
    pub k: f64,
    pub b: f64,
}

fn circle(center: C, r: f64, n: usize) -> impl Iterator<Item = C> {
    (0..n).map(move |j| center + C::from_polar(r, 2.0 * std::f64::consts::PI * j as f64 / n as f64))
}

/// Chooses the radius maximising `eta` among fractions of the distance from
/// `anchor` to the critical set.
pub fn branch_certificate(map: &Map, anchor: C) -> Result<InverseBranchSpec> {
    let dist = map
        .finite_critical_points()
        .iter()
        .map(|c| (c - anchor).norm())
        .fold(f64::INFINITY, f64::min);
    let dist = if dist.is_finite() { dist } else { 1.0 };
    let mut best: Option<InverseBranchSpec> = None;
    for step in 1..=9 {
        let r = dist * 0.05 * step as f64;
        let (mut k, mut b) = (f64::INFINITY, 0.0_f64);
        for z in circle(anchor, 2.0 * r, BOUNDARY_SAMPLES) {
            let m = map.deriv(z).norm();
            k = k.min(m);
            b = b.max(m);
        }
        if k > 1.0 && best.map_or(true, |s| k * r > s.eta) {
            best = Some(InverseBranchSpec { anchor, center: map.eval(anchor), radius: r, eta: k * r, k, b });
        }
    }
    best.ok_or_else(|| HyperbolicError::NotExpanding { deriv: map.deriv(anchor).norm() })
}

impl InverseBranchSpec {
    /// Preimage of `w` on this branch, by Newton seeded at the anchor.
    pub fn apply(&self, map: &Map, w: C) -> Result<C> {
        let distance = (w - self.center).norm();
        if !(distance < self.eta) {
            return Err(HyperbolicError::OutsideDisk { distance, eta: self.eta });
        }
        let mut z = self.anchor;
        for _ in 0..60 {
            let (fz, dz) = map.eval_deriv(z);
            let step = (fz - w) / dz;
            z -= step;
            if !(step.norm() > 1e-16 * z.norm().max(1.0)) {
                break;
            }
        }
        let distance = (z - self.anchor).norm();
        let bound = self.eta / self.k;
        if !(distance <= bound * (1.0 + 1e-12)) {
            return Err(HyperbolicError::BranchAmbiguity { distance, bound });
        }
        Ok(z)
    }

    /// Checks `(1/B)|w-w'| <= |g(w)-g(w')| <= (1/K)|w-w'|` on random pairs in the disk.
    /// Returns the number of violating pairs.
    pub fn check_contraction(&self, map: &Map, pairs: usize, seed: u64) -> Result<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut bad = 0;
        let draw = |rng: &mut ChaCha8Rng| {
            let r = self.eta * 0.999 * rng.gen::<f64>().sqrt();
            self.center + C::from_polar(r, rng.gen_range(0.0..std::f64::consts::TAU))
        };
        for _ in 0..pairs {
            let (w1, w2) = (draw(&mut rng), draw(&mut rng));
            let gap = (self.apply(map, w1)? - self.apply(map, w2)?).norm();
            let d = (w1 - w2).norm();
            let slack = 1e-12 * d;
            if gap < d / self.b - slack || gap > d / self.k + slack {
                bad += 1;
            }
        }
        Ok(bad)
    }
}

/// The preimage of `w` near `anchor` together with its certificate.
pub fn inverse_branch(family: &MapFamily, lambda: &Param, anchor: C, w: C) -> Result<(C, InverseBranchSpec)> {
    let map = family.at(lambda)?;
    let spec = branch_certificate(&map, anchor)?;
    Ok((spec.apply(&map, w)?, spec))
}

// ---------------------------------------------------------------------------
// distortion

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistortionPoint {
    pub n: usize,
    pub deviation: f64,
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistortionReport {
    /// `(f_lambda^n)'(h_lambda(w0)) / (f_0^n)'(w0)`.
    pub ratio: C,
    pub n: usize,
    /// `|ratio - 1| <= e^{n C |lambda - lambda0|} - 1` at the requested `n`.
    pub bound_ok: bool,
    /// The same bound for every `n' <= max(n, 40)`.
    pub extrapolated_ok: bool,
    pub c_fit: f64,
    pub profile: Vec<DistortionPoint>,
}

const DISTORTION_FIT_N: usize = 10;
const DISTORTION_EXTRAPOLATE_N: usize = 40;

/// Ratio profile `r_k`, `k = 1..=n`, along the cycle of `w0` moved to `lambda`.
pub fn distortion_profile(family: &MapFamily, base: &Param, lambda: &Param, w0: C, n: usize) -> Result<Vec<C>> {
    let map0 = family.at(base)?;
    let cycle = cycle_through(&map0, w0)?;
    let track = continue_orbit(family, &TrackRequest::new(base.clone(), lambda.clone(), cycle))?;
    let map1 = family.at(lambda)?;
    let p = track.base_points.len();
    let step: Vec<C> = (0..p)
        .map(|i| map1.deriv(track.moved_points[i]) / map0.deriv(track.base_points[i]))
        .collect();
    let mut r = C::new(1.0, 0.0);
    Ok((0..n)
        .map(|k| {
            r *= step[k % p];
            r
        })
        .collect())
}

/// Distortion ratio with `C` fitted on `n <= 10`.
pub fn distortion_ratio(family: &MapFamily, base: &Param, lambda: &Param, w0: C, n: usize) -> Result<DistortionReport> {
    assert!(n >= 1, "n must be positive");
    let top = n.max(DISTORTION_EXTRAPOLATE_N);
    let prof = distortion_profile(family, base, lambda, w0, top)?;
    let dl = base.distance(lambda);
    let c_fit = if dl == 0.0 {
        0.0
    } else {
        (1..=DISTORTION_FIT_N)
            .map(|k| (1.0 + (prof[k - 1] - 1.0).norm()).ln() / (k as f64 * dl))
            .fold(0.0, f64::max)
    };
    let profile: Vec<DistortionPoint> = (1..=top)
        .map(|k| DistortionPoint {
            n: k,
            deviation: (prof[k - 1] - 1.0).norm(),
            bound: (k as f64 * c_fit * dl).exp_m1(),
        })
        .collect();
    let holds = |p: &DistortionPoint| p.deviation <= p.bound * (1.0 + 1e-9) + 1e-15;
    Ok(DistortionReport {
        ratio: prof[n - 1],
        n,
        bound_ok: holds(&profile[n - 1]),
        extrapolated_ok: profile.iter().all(holds),
        c_fit,
        profile,
    })
}

// ---------------------------------------------------------------------------
// chain linearization

/// A germ `g(d) = P(d) / Q(d)` with `P(0) = 0`, `Q(0) != 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Germ {
    pub num: Vec<C>,
    pub den: Vec<C>,
}

/// Coefficients of `p(w + d)` in `d`.
pub fn taylor_shift(coeffs: &[C], w: C) -> Vec<C> {
    let mut b = coeffs.to_vec();
    let n = b.len();
    for k in 0..n {
        for j in (k..n - 1).rev() {
            let t = b[j + 1] * w;
            b[j] += t;
        }
    }
    b
}

impl Germ {
    pub fn linear(a: C) -> Self {
        Germ { num: vec![C::new(0.0, 0.0), a], den: vec![C::new(1.0, 0.0)] }
    }

    /// `d -> f(w + d) - f(w)`.
    pub fn of_map(map: &Map, w: C) -> Self {
        let ns = taylor_shift(map.numerator(), w);
        if map.is_polynomial() {
            let mut num = ns;
            num[0] = C::new(0.0, 0.0);
            return Germ { num, den: vec![C::new(1.0, 0.0)] };
        }
        // (N(w+d) D(w) - N(w) D(w+d)) / (D(w+d) D(w))
        let ds = taylor_shift(map.denominator(), w);
        let (n0, d0) = (ns[0], ds[0]);
        let mut num: Vec<C> = ns.iter().zip(&ds).map(|(a, b)| a * d0 - n0 * b).collect();
        num[0] = C::new(0.0, 0.0);
        let den = ds.iter().map(|b| b * d0).collect();
        Germ { num, den }
    }

    pub fn eval(&self, d: C) -> C {
        crate::roots::horner(&self.num, d) / crate::roots::horner(&self.den, d)
    }

    pub fn derivative_at_zero(&self) -> C {
        self.num[1] / self.den[0]
    }

    /// Taylor series of `P/Q` to degree `n`.
    pub fn series(&self, n: usize) -> Series {
        let q0 = self.den[0];
        let mut h = vec![C::new(0.0, 0.0); n + 1];
        for k in 0..=n {
            let mut acc = self.num.get(k).copied().unwrap_or_default();
            for j in 1..=k.min(self.den.len() - 1) {
                acc -= self.den[j] * h[k - j];
            }
            h[k] = acc / q0;
        }
        Series { coeffs: h }
    }
}

pub const DEFAULT_TRUNC: usize = 12;
pub const DEFAULT_PAST: usize = 40;
const RESIDUAL_SAMPLES: usize = 32;
const MAX_HALVINGS: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainLinearization {
    pub psi0: Series,
    pub psi1: Series,
    pub rho: f64,
    /// `(rho/2) |m_n|^{-1}`.
    pub rho_n: f64,
    pub n: usize,
    /// `m_n = (f^n)'(w)`.
    pub multiplier: C,
    /// Quadratic-error constant `C`.
    pub c_quad: f64,
    /// Functional-equation residual on `|z| = rho_n / 2`.
    pub residual: f64,
    pub retries: usize,
    /// Smallest `|g_j'(0)|` along the chain.
    pub min_expansion: f64,
}

fn quad_constant(psi: &Series, rho: f64) -> f64 {
    [0.5, 0.25, 0.125]
        .iter()
        .flat_map(|&s| circle(C::new(0.0, 0.0), s * rho, RESIDUAL_SAMPLES).collect::<Vec<_>>())
        .map(|z| (psi.eval(z) - z).norm() / z.norm_sqr())
        .fold(0.0, f64::max)
}

/// Linearizes the chain `g_{zero+n-1} o .. o g_zero` as `psi1(m_n psi0(z))`,
/// where `germs[0..zero]` is the past used to normalise `psi0`.
pub fn linearize_germs(germs: &[Germ], zero: usize, n: usize, n_trunc: usize, rho0: f64) -> Result<ChainLinearization> {
    assert!(n >= 1 && germs.len() >= zero + n, "need germs for the past and n future steps");
    let chain = &germs[..zero + n];
    let min_expansion = chain.iter().map(|g| g.derivative_at_zero().norm()).fold(f64::INFINITY, f64::min);
    if !(min_expansion > 1.0) {
        return Err(HyperbolicError::NotExpanding { deriv: min_expansion });
    }
    // phi_{j+1} = a_j phi_j o g_j^{-1}
    let mut phi = Series::identity(n_trunc);
    let mut psi0 = phi.clone();
    let mut m = C::new(1.0, 0.0);
    for (j, g) in chain.iter().enumerate() {
        if j == zero {
            psi0 = phi.clone();
        }
        let s = g.series(n_trunc);
        let a = s.coeffs[1];
        phi = phi.compose(&s.reversion()).scale(a);
        if j >= zero {
            m *= a;
        }
        if phi.coeffs.iter().any(|c| !c.is_finite()) {
            return Err(HyperbolicError::ChainDivergence { retries: 0 });
        }
    }
    if zero == chain.len() {
        psi0 = phi.clone();
    }
    let psi1 = phi.reversion();
    let future = &germs[zero..zero + n];

    let mut rho = rho0;
    for retries in 0..=MAX_HALVINGS {
        let rho_n = rho / (2.0 * m.norm());
        let guard = psi0.scaled_tail(rho).max(psi1.scaled_tail(rho)) <= 1e6 * rho;
        let residual = circle(C::new(0.0, 0.0), rho_n / 2.0, RESIDUAL_SAMPLES)
            .map(|z| {
                let exact = future.iter().fold(z, |d, g| g.eval(d));
                (exact - psi1.eval(m * psi0.eval(z))).norm()
            })
            .fold(0.0, f64::max);
        let c_quad = quad_constant(&psi0, rho).max(quad_constant(&psi1, rho));
        if guard && residual <= 1e-8 * rho && c_quad * rho < 1.0 {
            return Ok(ChainLinearization {
                psi0,
                psi1,
                rho,
                rho_n,
                n,
                multiplier: m,
                c_quad,
                residual,
                retries,
                min_expansion,
            });
        }
        rho /= 2.0;
    }
    Err(HyperbolicError::ChainDivergence { retries: MAX_HALVINGS })
}

/// Linearizes along an explicit orbit `points[0..]` of `map` with
/// `points[zero]` playing the role of `w`.
pub fn linearize_chain(map: &Map, points: &[C], zero: usize, n: usize, n_trunc: usize) -> Result<ChainLinearization> {
    let germs: Vec<Germ> = points[..zero + n].iter().map(|&w| Germ::of_map(map, w)).collect();
    let crit = map.finite_critical_points();
    let dist = points[zero..=zero + n]
        .iter()
        .flat_map(|w| crit.iter().map(move |c| (c - w).norm()))
        .fold(f64::INFINITY, f64::min);
    let rho0 = if dist.is_finite() { (0.5 * dist).min(1.0) } else { 1.0 };
    linearize_germs(&germs, zero, n, n_trunc, rho0)
}

/// Linearization of `f^n` at a point `w` of a repelling cycle.
pub fn linearize_orbit(family: &MapFamily, lambda: &Param, w: C, n: usize, n_trunc: usize) -> Result<ChainLinearization> {
    let map = family.at(lambda)?;
    let cycle = cycle_through(&map, w)?;
    let p = cycle.len();
    let points: Vec<C> = (0..=DEFAULT_PAST + n)
        .map(|k| cycle[(k + p * (DEFAULT_PAST / p + 1) - DEFAULT_PAST) % p])
        .collect();
    linearize_chain(&map, &points, DEFAULT_PAST, n, n_trunc)
}

// ---------------------------------------------------------------------------
// Cantor hyperbolic sets

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Disk {
    pub center: C,
    pub radius: f64,
}

impl Disk {
    pub fn contains(&self, z: C) -> bool {
        (z - self.center).norm() < self.radius
    }
}

#[derive(Clone, Debug)]
pub struct CantorSystem {
    pub map: Map,
    pub generators: Vec<InverseBranchSpec>,
    /// `g_i` maps every disk into `disks[i]`.
    pub disks: Vec<Disk>,
    pub depth: usize,
    pub words: Vec<Vec<u8>>,
    pub cloud: Vec<C>,
    /// `min |f'|` over the cloud.
    pub expansion: f64,
}

fn nearest_preimage(map: &Map, w: C, reference: C) -> Result<C> {
    let pre = map.preimages(w)?;
    Ok(pre
        .into_iter()
        .min_by(|a, b| (a - reference).norm().total_cmp(&(b - reference).norm()))
        .expect("degree >= 2"))
}

const DISK_SAMPLES: usize = 128;

pub fn build_cantor(family: &MapFamily, lambda: &Param, anchors: &[C], depth: usize) -> Result<CantorSystem> {
    let map = family.at(lambda)?;
    let mut polished = Vec::with_capacity(anchors.len());
    for &a in anchors {
        let p = detect_period(&map, a).ok_or(HyperbolicError::NotPeriodic { max_period: MAX_DETECT_PERIOD })?;
        let pp = map.find_periodic(p, a)?;
        if !(pp.multiplier.modulus() > 1.0) {
            return Err(HyperbolicError::NotExpanding { deriv: pp.multiplier.modulus() });
        }
        polished.push(pp.location);
    }
    let generators: Vec<InverseBranchSpec> =
        polished.iter().map(|&a| branch_certificate(&map, a)).collect::<Result<_>>()?;
    let g = generators.len();

    // smallest disks with g_i(D_j) inside D_i, by fixed point iteration on hulls
    let mut disks: Vec<Disk> = generators.iter().map(|s| Disk { center: s.anchor, radius: s.radius }).collect();
    let scale = polished.iter().map(|a| a.norm()).fold(1.0, f64::max);
    let mut settled = false;
    for _ in 0..400 {
        let mut next = Vec::with_capacity(g);
        for i in 0..g {
            let mut pts = vec![polished[i]];
            for dj in &disks {
                for w in circle(dj.center, dj.radius, DISK_SAMPLES) {
                    pts.push(nearest_preimage(&map, w, disks[i].center)?);
                }
            }
            let (lo_re, hi_re, lo_im, hi_im) = pts.iter().fold(
                (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY),
                |(a, b, c, d), z| (a.min(z.re), b.max(z.re), c.min(z.im), d.max(z.im)),
            );
            let center = C::new(0.5 * (lo_re + hi_re), 0.5 * (lo_im + hi_im));
            let radius = 1.02 * pts.iter().map(|z| (z - center).norm()).fold(0.0, f64::max);
            if !(radius < 1e3 * scale) {
                return Err(HyperbolicError::CoverageError(i));
            }
            next.push(Disk { center, radius });
        }
        let change = disks
            .iter()
            .zip(&next)
            .map(|(a, b)| (a.center - b.center).norm() + (a.radius - b.radius).abs())
            .fold(0.0, f64::max);
        disks = next;
        if change < 1e-10 * scale {
            settled = true;
            break;
        }
    }
    if !settled {
        return Err(HyperbolicError::CoverageError(0));
    }
    for i in 0..g {
        for j in i + 1..g {
            if (disks[i].center - disks[j].center).norm() <= disks[i].radius + disks[j].radius {
                return Err(HyperbolicError::OverlapError(i, j));
            }
        }
    }
    // branches must be single valued on every disk
    let crit_values: Vec<C> = map.finite_critical_points().iter().map(|&c| map.eval(c)).collect();
    for (j, dj) in disks.iter().enumerate() {
        if crit_values.iter().any(|&v| (v - dj.center).norm() <= dj.radius) {
            return Err(HyperbolicError::CoverageError(j));
        }
    }
    for i in 0..g {
        for dj in &disks {
            for w in circle(dj.center, dj.radius, DISK_SAMPLES) {
                if !disks[i].contains(nearest_preimage(&map, w, disks[i].center)?) {
                    return Err(HyperbolicError::CoverageError(i));
                }
            }
        }
    }

    let words = all_words(g, depth.max(1));
    let mut sys = CantorSystem { map, generators, disks, depth, words, cloud: Vec::new(), expansion: 0.0 };
    sys.cloud = if depth == 0 {
        sys.words.truncate(g);
        polished.clone()
    } else {
        sys.words.par_iter().map(|w| sys.point(w)).collect::<Result<Vec<_>>>()?
    };
    sys.expansion = sys.cloud.iter().map(|&z| sys.map.deriv(z).norm()).fold(f64::INFINITY, f64::min);
    if !(sys.expansion > 1.0) {
        return Err(HyperbolicError::NotExpanding { deriv: sys.expansion });
    }
    for &z in &sys.cloud {
        let fz = sys.map.eval(z);
        if !sys.disks.iter().any(|d| d.contains(fz)) {
            return Err(HyperbolicError::CoverageError(sys.disk_of(z).unwrap_or(0)));
        }
    }
    Ok(sys)
}

fn all_words(g: usize, k: usize) -> Vec<Vec<u8>> {
    let total = g.pow(k as u32);
    (0..total)
        .map(|mut idx| {
            let mut w = vec![0u8; k];
            for slot in w.iter_mut().rev() {
                *slot = (idx % g) as u8;
                idx /= g;
            }
            w
        })
        .collect()
}

impl CantorSystem {
    /// `g_i(w)`: the preimage of `w` in disk `i`.
    pub fn branch(&self, i: usize, w: C) -> Result<C> {
        nearest_preimage(&self.map, w, self.disks[i].center)
    }

    /// `g_{w_1} o .. o g_{w_k}(a_{w_k})`.
    pub fn point(&self, word: &[u8]) -> Result<C> {
        let last = *word.last().expect("nonempty word") as usize;
        let mut z = self.generators[last].anchor;
        for &l in word.iter().rev() {
            z = self.branch(l as usize, z)?;
        }
        Ok(z)
    }

    pub fn disk_of(&self, z: C) -> Option<usize> {
        self.disks.iter().position(|d| d.contains(z))
    }

    /// An orbit `points[0..=past+future]` inside the set whose point at index
    /// `past` has itinerary beginning with `word`; the other letters are drawn
    /// from `seed`.
    pub fn coded_chain(&self, word: &[u8], past: usize, future: usize, seed: u64) -> Result<Vec<C>> {
        const TAIL: usize = 60;
        let g = self.generators.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let len = past + future.max(word.len()) + TAIL;
        let mut letters: Vec<usize> = (0..len).map(|_| rng.gen_range(0..g)).collect();
        for (k, &l) in word.iter().enumerate() {
            letters[past + k] = l as usize;
        }
        let mut z = self.generators[letters[len - 1]].anchor;
        let mut pts = vec![C::new(0.0, 0.0); len];
        for k in (0..len).rev() {
            z = self.branch(letters[k], z)?;
            pts[k] = z;
        }
        pts.truncate(past + future + 1);
        Ok(pts)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut wtr = std::io::BufWriter::new(out);
        writeln!(wtr, "word,re,im")?;
        for (w, z) in self.words.iter().zip(&self.cloud) {
            let code: String = w.iter().map(|l| char::from(b'0' + l)).collect();
            writeln!(wtr, "{code},{:.17e},{:.17e}", z.re, z.im)?;
        }
        wtr.flush()
    }
}

// ---------------------------------------------------------------------------
// Hölder exponents of the motion

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderBand {
    pub alpha_low: f64,
    pub alpha_high: f64,
    pub alpha_fit: f64,
    pub intercept: f64,
    pub pairs: usize,
    pub eta: f64,
}

/// The cloud of `cantor` moved to `lambda`: anchors by continuation, cloud
/// points by following each branch word from the moved anchor.
pub fn moved_cloud(family: &MapFamily, base: &Param, lambda: &Param, cantor: &CantorSystem) -> Result<Vec<C>> {
    let moved_anchors: Vec<C> = cantor
        .generators
        .iter()
        .map(|s| {
            let cycle = cycle_through(&cantor.map, s.anchor)?;
            let track = continue_orbit(family, &TrackRequest::new(base.clone(), lambda.clone(), cycle))?;
            Ok(track.moved_points[0])
        })
        .collect::<Result<_>>()?;
    if cantor.depth == 0 {
        return Ok(moved_anchors);
    }
    let map1 = family.at(lambda)?;
    cantor
        .words
        .par_iter()
        .map(|word| {
            let last = *word.last().expect("nonempty") as usize;
            let mut z = cantor.generators[last].anchor;
            let mut z1 = moved_anchors[last];
            for &l in word.iter().rev() {
                z = cantor.branch(l as usize, z)?;
                z1 = nearest_preimage(&map1, z1, z)?;
            }
            Ok(z1)
        })
        .collect()
}

/// Hölder exponents of the motion `base -> lambda` over cloud pairs closer
/// than `eta / 4`, in logarithms `u = log(d / eta)`. `alpha_fit` and
/// `intercept` are the least-squares line `u' = a u + b`; the band is the
/// range of `(u' - b) / u`.
pub fn holder_exponents(family: &MapFamily, base: &Param, lambda: &Param, cantor: &CantorSystem) -> Result<HolderBand> {
    let moved = moved_cloud(family, base, lambda, cantor)?;
    let eta = cantor.generators.iter().map(|s| s.eta).fold(f64::INFINITY, f64::min);
    let cloud = &cantor.cloud;
    let uv: Vec<(f64, f64)> = (0..cloud.len())
        .into_par_iter()
        .flat_map_iter(|i| {
            let moved = &moved;
            (i + 1..cloud.len()).filter_map(move |j| {
                let d = (cloud[i] - cloud[j]).norm();
                if d < eta / 4.0 && d > 0.0 {
                    Some(((d / eta).ln(), ((moved[i] - moved[j]).norm() / eta).ln()))
                } else {
                    None
                }
            })
        })
        .collect();
    let n = uv.len();
    assert!(n >= 2, "too few close pairs in the cloud");
    let (mx, my) = uv.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0, b + p.1));
    let (mx, my) = (mx / n as f64, my / n as f64);
    let (sxx, sxy) = uv
        .iter()
        .fold((0.0, 0.0), |(a, b), p| (a + (p.0 - mx) * (p.0 - mx), b + (p.0 - mx) * (p.1 - my)));
    let alpha = sxy / sxx;
    let b = my - alpha * mx;
    // e^b (d/eta)^hi <= d'/eta <= e^b (d/eta)^lo for every pair
    let (lo, hi) = uv.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(u, v)| {
        let a = (v - b) / u;
        (lo.min(a), hi.max(a))
    });
    Ok(HolderBand { alpha_low: lo, alpha_high: hi, alpha_fit: alpha, intercept: b, pairs: n, eta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C {
        C::new(re, im)
    }

    fn quad() -> MapFamily {
        MapFamily::unicritical(2).unwrap()
    }

    fn beta(cp: C) -> C {
        (1.0 + (1.0 - 4.0 * cp).sqrt()) / 2.0
    }

    fn track_beta(to: C) -> OrbitTrack {
        let req = TrackRequest::new(Param::one(c(0., 0.)), Param::one(to), vec![c(1., 0.)]);
        continue_orbit(&quad(), &req).unwrap()
    }

    #[test]
    fn beta_continues_to_closed_form() {
        let t = track_beta(c(-0.5, 0.));
        assert!((t.moved_points[0] - c((1.0 + 3f64.sqrt()) / 2.0, 0.)).norm() < 1e-12);
        let t = track_beta(c(-2., 0.));
        assert!((t.moved_points[0] - c(2., 0.)).norm() < 1e-12);
        assert!(t.residual <= 1e-10 * 2.0);
        assert!(t.k_track >= 2.0 - 1e-9);
    }

    #[test]
    fn trivial_path_is_identity() {
        let req = TrackRequest::new(Param::one(c(0., 1.)), Param::one(c(0., 1.)), vec![c(-1., 1.), c(-1., -1.)]);
        let t = continue_orbit(&quad(), &req).unwrap();
        assert_eq!(t.moved_points, t.base_points);
    }

    #[test]
    fn period_two_cycle_continues() {
        // period-2 cycle of z^2 + c solves z^2 + z + c + 1 = 0
        let f = quad();
        let (c0, c1) = (c(-2.5, 0.), c(-2.5, 0.3));
        let roots = |cp: C| {
            let s = (C::new(1.0, 0.0) - 4.0 * (cp + 1.0)).sqrt();
            [(-1.0 + s) / 2.0, (-1.0 - s) / 2.0]
        };
        let req = TrackRequest::new(Param::one(c0), Param::one(c1), roots(c0).to_vec());
        let t = continue_orbit(&f, &req).unwrap();
        let want = roots(c1);
        assert!((t.moved_points[0] - want[0]).norm() < 1e-11);
        assert!((t.moved_points[1] - want[1]).norm() < 1e-11);
    }

    #[test]
    fn losing_hyperbolicity_is_reported() {
        // beta becomes parabolic at c = 1/4
        let req = TrackRequest::new(Param::one(c(0., 0.)), Param::one(c(0.25, 0.)), vec![c(1., 0.)]);
        assert!(matches!(
            continue_orbit(&quad(), &req),
            Err(HyperbolicError::LostHyperbolicity { .. }) | Err(HyperbolicError::StepFloorReached { .. })
        ));
    }

    #[test]
    fn inverse_branch_examples() {
        let f = quad();
        let (z, _) = inverse_branch(&f, &Param::one(c(-2., 0.)), c(2., 0.), c(2., 0.)).unwrap();
        assert!((z - c(2., 0.)).norm() < 1e-14);
        let (z, _) = inverse_branch(&f, &Param::one(c(0., 0.)), c(1., 0.), c(1.21, 0.)).unwrap();
        assert!((z - c(1.1, 0.)).norm() < 1e-14);
        let lam = Param::one(c(-2., 0.));
        let (z1, spec) = inverse_branch(&f, &lam, c(2., 0.), c(2.0, 0.)).unwrap();
        let (z2, _) = inverse_branch(&f, &lam, c(2., 0.), c(2.1, 0.)).unwrap();
        let gap = (z1 - z2).norm();
        assert!(gap >= 0.1 / spec.b && gap <= 0.1 / spec.k, "gap {gap} spec {spec:?}");
        assert!(spec.k > 1.0 && spec.k <= spec.b);
    }

    #[test]
    fn contraction_holds_on_random_pairs() {
        let map = quad().at(&Param::one(c(-2., 0.))).unwrap();
        let spec = branch_certificate(&map, c(2., 0.)).unwrap();
        assert_eq!(spec.check_contraction(&map, 100, 7).unwrap(), 0);
        let map = quad().at(&Param::one(c(-6., 0.))).unwrap();
        let spec = branch_certificate(&map, c(-2., 0.)).unwrap();
        assert_eq!(spec.check_contraction(&map, 100, 8).unwrap(), 0);
    }

    #[test]
    fn branch_outside_disk_is_rejected() {
        let f = quad();
        let r = inverse_branch(&f, &Param::one(c(0., 0.)), c(1., 0.), c(3., 0.));
        assert!(matches!(r, Err(HyperbolicError::OutsideDisk { .. })));
    }

    #[test]
    fn distortion_trivial_and_closed_form() {
        let f = quad();
        let z = Param::one(c(0., 0.));
        let r = distortion_ratio(&f, &z, &z, c(1., 0.), 20).unwrap();
        assert_eq!(r.ratio, c(1., 0.));
        assert!(r.bound_ok && r.c_fit == 0.0);

        let lam = Param::one(c(1e-4, 0.));
        let r = distortion_ratio(&f, &z, &lam, c(1., 0.), 20).unwrap();
        let want = beta(c(1e-4, 0.)).powi(20);
        assert!((r.ratio - want).norm() < 1e-12);
        assert!(r.bound_ok && r.extrapolated_ok);
        let r40 = distortion_ratio(&f, &z, &lam, c(1., 0.), 40).unwrap();
        assert!((r40.ratio - 1.0).norm() >= (r.ratio - 1.0).norm());
    }

    #[test]
    fn taylor_shift_matches_evaluation() {
        let p = vec![c(1., 2.), c(0., -1.), c(3., 0.), c(0.5, 0.5)];
        let w = c(0.7, -0.2);
        let s = taylor_shift(&p, w);
        let d = c(0.01, 0.03);
        assert!((crate::roots::horner(&s, d) - crate::roots::horner(&p, w + d)).norm() < 1e-14);
    }

    #[test]
    fn linear_germ_linearizes_trivially() {
        let germs = vec![Germ::linear(c(2., 0.)); 50];
        let lin = linearize_germs(&germs, 40, 10, DEFAULT_TRUNC, 1.0).unwrap();
        assert_eq!(lin.psi0, Series::identity(DEFAULT_TRUNC));
        assert_eq!(lin.psi1, Series::identity(DEFAULT_TRUNC));
        assert_eq!(lin.c_quad, 0.0);
    }

    /// Koenigs coefficients at 2 for z^2 - 2 from phi(4z + z^2) = 4 phi(z).
    fn koenigs(n: usize) -> Vec<C> {
        let g = Series::from_coeffs(vec![c(0., 0.), c(4., 0.), c(1., 0.)], n);
        let mut phi = Series::identity(n);
        for k in 2..=n {
            let e = phi.compose(&g).coeffs[k] - phi.coeffs[k].scale(4.0);
            // coefficient k enters with 4^k - 4
            phi.coeffs[k] -= e / (4f64.powi(k as i32) - 4.0);
        }
        phi.coeffs
    }

    #[test]
    fn fixed_point_of_chebyshev_matches_koenigs() {
        let lam = Param::one(c(-2., 0.));
        let lin = linearize_orbit(&quad(), &lam, c(2., 0.), 8, DEFAULT_TRUNC).unwrap();
        assert!(lin.residual <= 1e-8 * lin.rho);
        assert!(lin.c_quad * lin.rho < 1.0);
        let k = koenigs(DEFAULT_TRUNC);
        for j in 0..=6 {
            assert!((lin.psi0.coeffs[j] - k[j]).norm() < 1e-10 * (1.0 + k[j].norm()), "j={j}");
        }
        assert!((lin.multiplier - c(65536., 0.)).norm() == 0.0);
        assert!((lin.rho_n - lin.rho / 2.0 * 4f64.powi(-8)).abs() <= 1e-12 * lin.rho_n);
    }

    #[test]
    fn chebyshev_linearizes_up_to_thirty() {
        let lam = Param::one(c(-2., 0.));
        for n in [1, 5, 15, 30] {
            let lin = linearize_orbit(&quad(), &lam, c(2., 0.), n, DEFAULT_TRUNC).unwrap();
            assert!(lin.residual <= 1e-8 * lin.rho, "n={n} residual {}", lin.residual);
            assert!(lin.c_quad * lin.rho < 1.0);
        }
    }

    fn cantor6(depth: usize) -> CantorSystem {
        build_cantor(&quad(), &Param::one(c(-6., 0.)), &[c(3., 0.), c(-2., 0.)], depth).unwrap()
    }

    #[test]
    fn cantor_depth_ten_is_expanding() {
        let s = cantor6(10);
        assert_eq!(s.cloud.len(), 1024);
        assert!(s.expansion > 1.0);
        // each cloud point stays bounded under iteration: escape test
        for &z in s.cloud.iter().step_by(37) {
            let o = s.map.orbit(z, 8);
            assert!(o.escaped_at.is_none());
        }
    }

    #[test]
    fn cantor_depth_zero_is_anchors() {
        let s = cantor6(0);
        assert_eq!(s.cloud, vec![c(3., 0.), c(-2., 0.)]);
    }

    #[test]
    fn cantor_word_shift() {
        let s = cantor6(6);
        for (w, &z) in s.words.iter().zip(&s.cloud).step_by(5) {
            let shifted = s.point(&w[1..]).unwrap();
            assert!((s.map.eval(z) - shifted).norm() < 1e-12 * shifted.norm().max(1.0));
        }
    }

    #[test]
    fn cantor_inside_mandelbrot_fails() {
        // c = -1: both fixed points exist but the Julia set is connected
        let r = build_cantor(&quad(), &Param::one(c(-1., 0.)), &[c(1.618033988749895, 0.), c(-0.6180339887498949, 0.)], 3);
        assert!(r.is_err());
    }

    #[test]
    fn cantor_coded_orbit_linearizes() {
        let s = cantor6(10);
        let chain = s.coded_chain(&s.words[345], DEFAULT_PAST, 30, 11).unwrap();
        for k in 0..chain.len() - 1 {
            assert!((s.map.eval(chain[k]) - chain[k + 1]).norm() < 1e-11);
        }
        for n in [1, 10, 30] {
            let lin = linearize_chain(&s.map, &chain, DEFAULT_PAST, n, DEFAULT_TRUNC).unwrap();
            assert!(lin.residual <= 1e-8 * lin.rho, "n={n} {}", lin.residual);
            assert!(lin.c_quad * lin.rho < 1.0);
        }
    }

    #[test]
    fn holder_identity_and_small_motion() {
        let s = cantor6(8);
        let f = quad();
        let base = Param::one(c(-6., 0.));
        let b = holder_exponents(&f, &base, &base, &s).unwrap();
        assert_eq!((b.alpha_low, b.alpha_high), (1.0, 1.0));
        // distances shrink like e^{-nL}, so typical exponents are L(lambda) / L(base)
        let lyap = |x: f64| {
            let m = f.at(&Param::one(c(x, 0.))).unwrap();
            crate::potential::lyapunov_from_green(&m, 1e-14).unwrap()
        };
        let mut widths = Vec::new();
        for dl in [0.01, 0.05, 0.1] {
            let b = holder_exponents(&f, &base, &Param::one(c(-6. + dl, 0.)), &s).unwrap();
            widths.push(b.alpha_high - b.alpha_low);
            let oracle = lyap(-6. + dl) / lyap(-6.);
            assert!(b.alpha_low <= oracle && oracle <= b.alpha_high, "{b:?} oracle {oracle}");
            assert!((b.alpha_fit - oracle).abs() < 0.2 * (1.0 - oracle), "{b:?} oracle {oracle}");
            if dl == 0.01 {
                assert!(b.alpha_high - b.alpha_low <= 0.1, "{b:?}");
            }
        }
        assert!(widths[0] <= widths[1] && widths[1] <= widths[2], "{widths:?}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn tracks_satisfy_conjugacy(re in -1.5f64..0.2, im in -0.5f64..0.5) {
            let t = track_beta(c(re, im));
            prop_assert!(t.residual <= 1e-10 * t.moved_points[0].norm().max(1.0));
            prop_assert!((t.moved_points[0] - beta(c(re, im))).norm() < 1e-10);
            prop_assert!(t.k_track > 1.0);
        }

        #[test]
        fn distortion_bound_single_c(dir in 0.0f64..std::f64::consts::TAU) {
            let f = quad();
            let z = Param::one(c(0., 0.));
            let mut cs = Vec::new();
            let mut cases = Vec::new();
            for dl in [1e-5, 1e-4, 1e-3] {
                let lam = Param::one(C::from_polar(dl, dir));
                let r = distortion_ratio(&f, &z, &lam, c(1., 0.), 40).unwrap();
                cs.push(r.c_fit);
                cases.push((dl, r.profile));
            }
            let cmax = cs.iter().cloned().fold(0.0, f64::max);
            for (dl, prof) in cases {
                for p in prof.iter().filter(|p| [5, 10, 20, 40].contains(&p.n)) {
                    prop_assert!(p.deviation <= (p.n as f64 * cmax * dl).exp_m1() * (1.0 + 1e-9));
                }
            }
        }
    }
}

//! The activity map of marked critical points, Newton solution of prescribed
//! preperiodic patterns, transversality and certificate verification.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::family::{FamilyDoc, FamilyError, LogPolar, Map, MapFamily, Param, Point1};
use crate::hyperbolic::{self, HyperbolicError, TrackRequest};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MisiurewiczError {
    #[error("invalid activity spec: {0}")]
    InvalidSpec(String),
    #[error("Newton did not converge in {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("critical point {index} lands on a cycle with |multiplier| = {modulus} (not repelling)")]
    NonRepellingTarget { index: usize, modulus: f64 },
    #[error("critical point {index} does not land on a cycle of period dividing {n}")]
    NotLanding { index: usize, n: usize },
    #[error(transparent)]
    Hyperbolic(#[from] HyperbolicError),
    #[error(transparent)]
    Family(#[from] FamilyError),
}

type Result<T> = std::result::Result<T, MisiurewiczError>;

/// Target of one tracked critical orbit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum Pattern {
    /// `chi = f^{k0+n}(c) - f^{k0}(c)`; `p` is the expected landing period, a divisor of `n`.
    Preperiodic {
        n: usize,
        #[serde(default)]
        p: Option<usize>,
    },
    /// `chi = f^{k0}(c) - h_lambda(target)`, the target being a point of a
    /// repelling cycle at `base` followed by continuation.
    Motion { base: Param, target: C },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActivitySpec {
    pub tracked: Vec<usize>,
    pub k0: usize,
    pub patterns: Vec<Pattern>,
    /// Free parameter coordinates of the solve slice; defaults to the first `k`.
    #[serde(default)]
    pub free: Option<Vec<usize>>,
}

impl ActivitySpec {
    /// Single critical point with an algebraic pattern.
    pub fn preperiodic(index: usize, k0: usize, n: usize) -> Self {
        ActivitySpec { tracked: vec![index], k0, patterns: vec![Pattern::Preperiodic { n, p: None }], free: None }
    }

    pub fn k(&self) -> usize {
        self.tracked.len()
    }

    pub fn free_coords(&self) -> Vec<usize> {
        self.free.clone().unwrap_or_else(|| (0..self.k()).collect())
    }

    pub fn validate(&self, family: &MapFamily) -> Result<()> {
        let k = self.k();
        let m = family.param_dim();
        let bad = |s: String| Err(MisiurewiczError::InvalidSpec(s));
        if k == 0 || k > m {
            return bad(format!("need 1 <= k <= {m}, got {k}"));
        }
        if self.patterns.len() != k {
            return bad("one pattern per tracked critical point".into());
        }
        if self.k0 < 1 {
            return bad("k0 must be >= 1".into());
        }
        if let Some(&i) = self.tracked.iter().find(|&&i| i >= family.marked_count()) {
            return bad(format!("critical index {i} out of range"));
        }
        let free = self.free_coords();
        if free.len() != k || free.iter().any(|&j| j >= m) {
            return bad("free coordinates must be k distinct indices below m".into());
        }
        for p in &self.patterns {
            if let Pattern::Preperiodic { n, p } = p {
                if *n < 1 || p.is_some_and(|p| p < 1 || n % p != 0) {
                    return bad("need n >= 1 and p dividing n".into());
                }
            }
        }
        Ok(())
    }
}

fn critical(map: &Map, index: usize) -> Result<C> {
    match map.marked_critical_points()?[index].location {
        Point1::Finite(c) => Ok(c),
        Point1::Infinity => Err(MisiurewiczError::InvalidSpec(format!("critical point {index} is at infinity"))),
    }
}

/// The activity vector at `lambda`.
pub fn activity_chi(family: &MapFamily, lambda: &Param, spec: &ActivitySpec) -> Result<Vec<C>> {
    let map = family.at(lambda)?;
    spec.tracked
        .iter()
        .zip(&spec.patterns)
        .map(|(&i, pat)| {
            let x = map.iterate(critical(&map, i)?, spec.k0);
            match pat {
                Pattern::Preperiodic { n, .. } => Ok(map.iterate(x, *n) - x),
                Pattern::Motion { base, target } => {
                    let cycle = hyperbolic::cycle_through(&family.at(base)?, *target)?;
                    let track = hyperbolic::continue_orbit(family, &TrackRequest::new(base.clone(), lambda.clone(), cycle))?;
                    Ok(x - track.moved_points[0])
                }
            }
        })
        .collect()
}

fn norm(v: &[C]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `k x k` Jacobian of `chi` in the free coordinates by central differences.
pub fn jacobian(family: &MapFamily, lambda: &Param, spec: &ActivitySpec, rel_step: f64) -> Result<DMatrix<C>> {
    let h = rel_step * lambda.norm().max(1.0);
    let free = spec.free_coords();
    let k = spec.k();
    let mut j = DMatrix::from_element(k, k, C::new(0.0, 0.0));
    for (col, &coord) in free.iter().enumerate() {
        let plus = activity_chi(family, &lambda.shifted(coord, C::new(h, 0.0)), spec)?;
        let minus = activity_chi(family, &lambda.shifted(coord, C::new(-h, 0.0)), spec)?;
        for row in 0..k {
            j[(row, col)] = (plus[row] - minus[row]) / (2.0 * h);
        }
    }
    Ok(j)
}

/// Largest `|d chi / d conj(lambda_j)| / |d chi / d lambda_j|` over the free coordinates.
pub fn cauchy_riemann_defect(family: &MapFamily, lambda: &Param, spec: &ActivitySpec) -> Result<f64> {
    let h = 1e-5 * lambda.norm().max(1.0);
    let mut worst = 0.0_f64;
    for &coord in &spec.free_coords() {
        let d = |dir: C| -> Result<Vec<C>> {
            let p = activity_chi(family, &lambda.shifted(coord, dir * h), spec)?;
            let m = activity_chi(family, &lambda.shifted(coord, -dir * h), spec)?;
            Ok(p.iter().zip(&m).map(|(a, b)| (a - b) / (2.0 * h)).collect())
        };
        let dx = d(C::new(1.0, 0.0))?;
        let dy = d(C::new(0.0, 1.0))?;
        for (a, b) in dx.iter().zip(&dy) {
            let holo = (a - C::i() * b) * 0.5;
            let anti = (a + C::i() * b) * 0.5;
            worst = worst.max(anti.norm() / holo.norm());
        }
    }
    Ok(worst)
}

/// Smallest singular value of a complex matrix via its real `2k x 2k` form.
pub fn sigma_min(j: &DMatrix<C>) -> f64 {
    let (r, c) = j.shape();
    let mut real = DMatrix::<f64>::zeros(2 * r, 2 * c);
    for a in 0..r {
        for b in 0..c {
            let z = j[(a, b)];
            real[(a, b)] = z.re;
            real[(a, b + c)] = -z.im;
            real[(a + r, b)] = z.im;
            real[(a + r, b + c)] = z.re;
        }
    }
    real.singular_values().iter().cloned().fold(f64::INFINITY, f64::min)
}

pub const FD_STEP: f64 = 1e-7;
const VERIFY_FD_STEP: f64 = 3e-7;

/// `sigma_min` of `D chi` at `lambda`.
pub fn transversality(family: &MapFamily, lambda: &Param, spec: &ActivitySpec) -> Result<f64> {
    Ok(sigma_min(&jacobian(family, lambda, spec, FD_STEP)?))
}

pub const DELTA_REP: f64 = 1e-3;
pub const N_CERT: usize = 60;
const SOLVE_TOL: f64 = 1e-12;
const CERT_TOL: f64 = 1e-10;
const MAX_NEWTON: usize = 60;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MisiurewiczCertificate {
    pub lambda: Param,
    pub residual: f64,
    /// Landing-cycle multiplier per tracked critical point.
    pub multipliers: Vec<LogPolar>,
    pub landing_periods: Vec<usize>,
    pub sigma_min: f64,
    /// `log m_n^+` for `n = 1..=N_CERT`.
    pub m_plus: Vec<f64>,
    pub pattern: ActivitySpec,
    pub iterations: usize,
    pub verified: bool,
}

/// Landing cycle of `f^{k0}(c_i)`: refined point, minimal period and the
/// per-step log derivatives along the cycle.
struct Landing {
    period: usize,
    multiplier: LogPolar,
    log_steps: Vec<f64>,
}

fn landing(map: &Map, spec: &ActivitySpec, slot: usize, family: &MapFamily) -> Result<Landing> {
    let index = spec.tracked[slot];
    let x = map.iterate(critical(map, index)?, spec.k0);
    let n = match &spec.patterns[slot] {
        Pattern::Preperiodic { n, .. } => *n,
        Pattern::Motion { base, target } => hyperbolic::detect_period(&family.at(base)?, *target)
            .ok_or(MisiurewiczError::NotLanding { index, n: 0 })?,
    };
    let tol = 1e-8 * x.norm().max(1.0);
    let q = (1..=n)
        .filter(|q| n % q == 0)
        .find(|&q| (map.iterate(x, q) - x).norm() <= tol)
        .ok_or(MisiurewiczError::NotLanding { index, n })?;
    let pp = map.find_periodic(q, x).unwrap_or_else(|_| crate::family::PeriodicPoint {
        location: x,
        period: q,
        multiplier: map.multiplier(&map.orbit(x, q - 1).points).unwrap_or(LogPolar { log_mod: f64::NEG_INFINITY, arg: 0.0 }),
        cycle: map.orbit(x, q - 1).points,
    });
    let log_steps = pp.cycle.iter().map(|&z| map.deriv(z).norm().ln()).collect();
    Ok(Landing { period: pp.period, multiplier: pp.multiplier, log_steps })
}

fn m_plus(landings: &[Landing]) -> Vec<f64> {
    (1..=N_CERT)
        .map(|n| {
            landings
                .iter()
                .map(|l| {
                    let q = l.period;
                    let full = (n / q) as f64 * l.log_steps.iter().sum::<f64>();
                    full + l.log_steps[..n % q].iter().sum::<f64>()
                })
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect()
}

/// Damped Newton on `chi = 0` in the free coordinates, followed by certification.
pub fn solve_misiurewicz(family: &MapFamily, seed: &Param, spec: &ActivitySpec) -> Result<MisiurewiczCertificate> {
    spec.validate(family)?;
    if seed.dim() != family.param_dim() {
        return Err(FamilyError::ParamDimension { expected: family.param_dim(), got: seed.dim() }.into());
    }
    let free = spec.free_coords();
    let mut lambda = seed.clone();
    let mut chi = activity_chi(family, &lambda, spec)?;
    let mut res = norm(&chi);
    let mut iterations = 0;
    while res > SOLVE_TOL && iterations < MAX_NEWTON {
        iterations += 1;
        let j = jacobian(family, &lambda, spec, FD_STEP)?;
        let rhs = DVector::from_iterator(chi.len(), chi.iter().map(|z| -z));
        let Some(step) = j.lu().solve(&rhs) else {
            break;
        };
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..12 {
            let mut trial = lambda.clone();
            for (col, &coord) in free.iter().enumerate() {
                trial.0[coord] += step[col] * t;
            }
            if let Ok(c) = activity_chi(family, &trial, spec) {
                let r = norm(&c);
                if r < res || r <= SOLVE_TOL {
                    lambda = trial;
                    chi = c;
                    res = r;
                    accepted = true;
                    break;
                }
            }
            t /= 2.0;
        }
        if !accepted {
            break;
        }
    }
    if !(res <= CERT_TOL) {
        return Err(MisiurewiczError::NoConvergence { iterations, residual: res });
    }
    let map = family.at(&lambda)?;
    let landings = (0..spec.k()).map(|s| landing(&map, spec, s, family)).collect::<Result<Vec<_>>>()?;
    for (slot, l) in landings.iter().enumerate() {
        if !(l.multiplier.modulus() > 1.0 + DELTA_REP) {
            return Err(MisiurewiczError::NonRepellingTarget { index: spec.tracked[slot], modulus: l.multiplier.modulus() });
        }
    }
    let mut cert = MisiurewiczCertificate {
        sigma_min: transversality(family, &lambda, spec)?,
        residual: res,
        multipliers: landings.iter().map(|l| l.multiplier).collect(),
        landing_periods: landings.iter().map(|l| l.period).collect(),
        m_plus: m_plus(&landings),
        lambda,
        pattern: spec.clone(),
        iterations,
        verified: false,
    };
    cert.verified = verify_certificate(&cert, family, spec).passed;
    Ok(cert)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub closure: Vec<f64>,
    pub closure_ok: bool,
    pub multipliers_ok: bool,
    pub sigma_min: f64,
    pub sigma_ok: bool,
    pub m_plus_ok: bool,
    pub failures: Vec<String>,
    pub passed: bool,
}

/// Independent re-check of a certificate.
pub fn verify_certificate(cert: &MisiurewiczCertificate, family: &MapFamily, spec: &ActivitySpec) -> VerifyReport {
    let mut failures = Vec::new();
    let mut closure = Vec::new();
    let mut closure_ok = true;
    let mut multipliers_ok = true;
    let mut m_plus_ok = true;
    let mut sigma = f64::NAN;
    match family.at(&cert.lambda) {
        Err(e) => failures.push(e.to_string()),
        Ok(map) => {
            for (slot, (&i, pat)) in spec.tracked.iter().zip(&spec.patterns).enumerate() {
                let Ok(c) = critical(&map, i) else {
                    failures.push(format!("critical point {i} unavailable"));
                    closure_ok = false;
                    continue;
                };
                let x = map.iterate(c, spec.k0);
                let gap = match pat {
                    Pattern::Preperiodic { n, p } => {
                        let y = map.iterate(x, *n);
                        (map.iterate(y, p.unwrap_or(*n)) - y).norm()
                    }
                    Pattern::Motion { .. } => activity_chi(family, &cert.lambda, spec)
                        .map(|v| v[slot].norm())
                        .unwrap_or(f64::INFINITY),
                };
                closure.push(gap);
                if !(gap <= 1e-9 * x.norm().max(1.0)) {
                    closure_ok = false;
                    failures.push(format!("orbit closure of critical point {i}: {gap:e}"));
                }
            }
            match (0..spec.k()).map(|s| landing(&map, spec, s, family)).collect::<Result<Vec<_>>>() {
                Ok(landings) => {
                    for (slot, l) in landings.iter().enumerate() {
                        let m = l.multiplier.modulus();
                        if !(m > 1.0 + DELTA_REP) {
                            multipliers_ok = false;
                            failures.push(format!(
                                "{}",
                                MisiurewiczError::NonRepellingTarget { index: spec.tracked[slot], modulus: m }
                            ));
                        }
                        if let Some(c) = cert.multipliers.get(slot) {
                            if (c.log_mod - l.multiplier.log_mod).abs() > 1e-8 {
                                multipliers_ok = false;
                                failures.push(format!("multiplier {slot} differs from the certificate"));
                            }
                        }
                    }
                    let mp = m_plus(&landings);
                    if mp.len() != cert.m_plus.len()
                        || mp.iter().zip(&cert.m_plus).any(|(a, b)| (a - b).abs() > 1e-8 * a.abs().max(1.0))
                    {
                        m_plus_ok = false;
                        failures.push("m_n^+ sequence differs from the certificate".into());
                    }
                }
                Err(e) => {
                    multipliers_ok = false;
                    m_plus_ok = false;
                    failures.push(e.to_string());
                }
            }
            match jacobian(family, &cert.lambda, spec, VERIFY_FD_STEP) {
                Ok(j) => sigma = sigma_min(&j),
                Err(e) => failures.push(e.to_string()),
            }
        }
    }
    let sigma_ok = sigma > 0.0 && (sigma - cert.sigma_min).abs() <= 1e-4 * sigma.max(1.0);
    if !sigma_ok {
        failures.push(format!("sigma_min {sigma:e} vs certificate {:e}", cert.sigma_min));
    }
    let passed = failures.is_empty();
    VerifyReport { closure, closure_ok, multipliers_ok, sigma_min: sigma, sigma_ok, m_plus_ok, failures, passed }
}

#[derive(Serialize)]
struct CertLine<'a> {
    lambda: &'a Param,
    residual: f64,
    multipliers: &'a [LogPolar],
    landing_periods: &'a [usize],
    sigma_min: f64,
    m_plus: &'a [f64],
    pattern: &'a ActivitySpec,
    family: FamilyDoc,
}

impl MisiurewiczCertificate {
    /// One NDJSON line (without the trailing newline).
    pub fn to_ndjson(&self, family: &MapFamily) -> String {
        serde_json::to_string(&CertLine {
            lambda: &self.lambda,
            residual: self.residual,
            multipliers: &self.multipliers,
            landing_periods: &self.landing_periods,
            sigma_min: self.sigma_min,
            m_plus: &self.m_plus,
            pattern: &self.pattern,
            family: FamilyDoc::from_family(family, None),
        })
        .expect("certificate serializes")
    }

    /// Reads a line written by [`to_ndjson`](Self::to_ndjson). `verified` and
    /// `iterations` are not stored and come back as `false` and 0.
    pub fn from_ndjson(line: &str) -> Result<(Self, MapFamily)> {
        #[derive(Deserialize)]
        struct Owned {
            lambda: Param,
            residual: f64,
            multipliers: Vec<LogPolar>,
            #[serde(default)]
            landing_periods: Vec<usize>,
            sigma_min: f64,
            m_plus: Vec<f64>,
            pattern: ActivitySpec,
            family: FamilyDoc,
        }
        let o: Owned = serde_json::from_str(line).map_err(|e| MisiurewiczError::InvalidSpec(e.to_string()))?;
        let (family, _) = o.family.resolve()?;
        let cert = MisiurewiczCertificate {
            lambda: o.lambda,
            residual: o.residual,
            multipliers: o.multipliers,
            landing_periods: o.landing_periods,
            sigma_min: o.sigma_min,
            m_plus: o.m_plus,
            pattern: o.pattern,
            iterations: 0,
            verified: false,
        };
        Ok((cert, family))
    }
}

/// Solves from every seed and keeps distinct verified certificates (parameters
/// farther apart than `min_sep`, with `sigma_min > sigma_floor`), in seed order.
pub fn batch_solve(
    family: &MapFamily,
    seeds: &[Param],
    spec: &ActivitySpec,
    min_sep: f64,
    sigma_floor: f64,
) -> Vec<MisiurewiczCertificate> {
    let found: Vec<Option<MisiurewiczCertificate>> =
        seeds.par_iter().map(|s| solve_misiurewicz(family, s, spec).ok()).collect();
    let mut out: Vec<MisiurewiczCertificate> = Vec::new();
    for cert in found.into_iter().flatten() {
        if cert.verified && cert.sigma_min > sigma_floor && out.iter().all(|o| o.lambda.distance(&cert.lambda) > min_sep) {
            out.push(cert);
        }
    }
    out
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

    fn chi1(spec: &ActivitySpec, x: C) -> C {
        activity_chi(&quad(), &Param::one(x), spec).unwrap()[0]
    }

    #[test]
    fn chi_examples() {
        let s = ActivitySpec::preperiodic(0, 2, 1);
        assert_eq!(chi1(&s, c(-2., 0.)), c(0., 0.));
        let h = 1e-4;
        let v = chi1(&s, c(-2. + h, 0.));
        // chi(c) = (c^2+c)^2 - c^2 exactly
        let x = c(-2. + h, 0.);
        let exact = (x * x + x) * (x * x + x) - x * x;
        assert!((v - exact).norm() < 1e-12);
        assert!(((v / (-8.0 * h)) - 1.0).norm() < 1e-3);
        let s2 = ActivitySpec::preperiodic(0, 2, 2);
        assert!(chi1(&s2, c(0., 1.)).norm() < 1e-15);
    }

    #[test]
    fn solve_minus_two() {
        let s = ActivitySpec::preperiodic(0, 2, 1);
        let cert = solve_misiurewicz(&quad(), &Param::one(c(-1.9, 0.)), &s).unwrap();
        assert!((cert.lambda.0[0] - c(-2., 0.)).norm() < 1e-10);
        assert!((cert.multipliers[0].modulus() - 4.0).abs() < 1e-9);
        assert!((cert.sigma_min - 8.0).abs() < 1e-4);
        assert!(cert.verified);
        for (n, m) in cert.m_plus.iter().enumerate() {
            assert!((m - (n + 1) as f64 * 4f64.ln()).abs() <= 1e-12 * m.abs());
        }
    }

    #[test]
    fn solve_i() {
        let s = ActivitySpec::preperiodic(0, 2, 2);
        let cert = solve_misiurewicz(&quad(), &Param::one(c(0.1, 1.05)), &s).unwrap();
        assert!((cert.lambda.0[0] - c(0., 1.)).norm() < 1e-10);
        assert!((cert.multipliers[0].modulus() - 4.0 * 2f64.sqrt()).abs() < 1e-9);
        assert_eq!(cert.landing_periods, vec![2]);
        assert!(cert.sigma_min > 0.0);
    }

    #[test]
    fn basin_radius() {
        for (target, spec) in [(c(-2., 0.), ActivitySpec::preperiodic(0, 2, 1)), (c(0., 1.), ActivitySpec::preperiodic(0, 2, 2))] {
            for k in 0..8 {
                let seed = target + C::from_polar(0.05, std::f64::consts::PI * k as f64 / 4.0);
                let cert = solve_misiurewicz(&quad(), &Param::one(seed), &spec).unwrap();
                assert!((cert.lambda.0[0] - target).norm() < 1e-10, "seed {seed}");
            }
        }
    }

    #[test]
    fn jacobian_matches_symbolic() {
        let s = ActivitySpec::preperiodic(0, 2, 1);
        let j = jacobian(&quad(), &Param::one(c(-2., 0.)), &s, FD_STEP).unwrap();
        // d/dc [(c^2+c)^2 - c^2] = 2(c^2+c)(2c+1) - 2c
        let x = c(-2., 0.);
        let exact = 2.0 * (x * x + x) * (2.0 * x + 1.0) - 2.0 * x;
        assert_eq!(exact, c(-8., 0.));
        assert!(((j[(0, 0)] - exact) / exact).norm() < 1e-4);
    }

    #[test]
    fn duplicate_rows_are_singular() {
        let f = MapFamily::branner_hubbard(3).unwrap();
        let spec = ActivitySpec {
            tracked: vec![0, 0],
            k0: 1,
            patterns: vec![Pattern::Preperiodic { n: 1, p: None }, Pattern::Preperiodic { n: 1, p: None }],
            free: None,
        };
        let lam = Param(vec![c(0.3, 0.1), c(0.7, -0.2)]);
        assert!(transversality(&f, &lam, &spec).unwrap() < 1e-10);
    }

    #[test]
    fn perturbed_certificate_fails_closure() {
        let s = ActivitySpec::preperiodic(0, 2, 1);
        let mut cert = solve_misiurewicz(&quad(), &Param::one(c(-1.9, 0.)), &s).unwrap();
        cert.lambda.0[0] += 1e-6;
        let rep = verify_certificate(&cert, &quad(), &s);
        assert!(!rep.closure_ok && !rep.passed);
    }

    #[test]
    fn attracting_landing_is_refused() {
        // c = 0: the critical point is the superattracting fixed point
        let s = ActivitySpec::preperiodic(0, 1, 1);
        let r = solve_misiurewicz(&quad(), &Param::one(c(0.05, 0.)), &s);
        assert!(matches!(r, Err(MisiurewiczError::NonRepellingTarget { .. })), "{r:?}");
        let cert = MisiurewiczCertificate {
            lambda: Param::one(c(0., 0.)),
            residual: 0.0,
            multipliers: vec![LogPolar::one()],
            landing_periods: vec![1],
            sigma_min: 0.0,
            m_plus: vec![],
            pattern: s.clone(),
            iterations: 0,
            verified: false,
        };
        let rep = verify_certificate(&cert, &quad(), &s);
        assert!(!rep.multipliers_ok && rep.failures.iter().any(|f| f.contains("not repelling")));
    }

    #[test]
    fn chi_is_holomorphic() {
        let s = ActivitySpec::preperiodic(0, 2, 2);
        let d = cauchy_riemann_defect(&quad(), &Param::one(c(0.02, 0.97)), &s).unwrap();
        assert!(d < 1e-6, "{d}");
    }

    #[test]
    fn motion_form_agrees_with_algebraic() {
        let f = quad();
        let star = Param::one(c(-2., 0.));
        let alg = ActivitySpec::preperiodic(0, 2, 1);
        let mot = ActivitySpec {
            tracked: vec![0],
            k0: 2,
            patterns: vec![Pattern::Motion { base: star.clone(), target: c(2., 0.) }],
            free: None,
        };
        let mut rng = 0x9e3779b97f4a7c15u64;
        for _ in 0..20 {
            rng = rng.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let t = (rng >> 11) as f64 / (1u64 << 53) as f64 * std::f64::consts::TAU;
            let lam = Param::one(c(-2., 0.) + C::from_polar(1e-6, t));
            let a = activity_chi(&f, &lam, &alg).unwrap()[0];
            let m = activity_chi(&f, &lam, &mot).unwrap()[0];
            // f(x) - x = (f'(y) - 1)(x - y) + O(|x - y|^2) with y the moved fixed point
            let map = f.at(&lam).unwrap();
            let y = map.iterate(c(0., 0.), 2) - m;
            let mult = map.deriv(y);
            assert!((a - (mult - 1.0) * m).norm() < 1e-9, "{a} {m}");
        }
    }

    #[test]
    fn ndjson_line_has_fields() {
        let s = ActivitySpec::preperiodic(0, 2, 1);
        let cert = solve_misiurewicz(&quad(), &Param::one(c(-1.9, 0.)), &s).unwrap();
        let line = cert.to_ndjson(&quad());
        let v: serde_json::Value = serde_json::from_str(&line).unwrap();
        for key in ["lambda", "residual", "multipliers", "sigma_min", "m_plus", "pattern", "family"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert!(!line.contains('\n'));
        let (back, fam) = MisiurewiczCertificate::from_ndjson(&line).unwrap();
        assert_eq!(fam, quad());
        assert_eq!(back.lambda, cert.lambda);
        assert!(verify_certificate(&back, &fam, &back.pattern.clone()).passed);
    }

    #[test]
    fn invalid_specs() {
        let f = quad();
        let mut s = ActivitySpec::preperiodic(0, 0, 1);
        assert!(s.validate(&f).is_err());
        s.k0 = 1;
        s.tracked = vec![3];
        assert!(s.validate(&f).is_err());
        let s = ActivitySpec { tracked: vec![0], k0: 1, patterns: vec![Pattern::Preperiodic { n: 4, p: Some(3) }], free: None };
        assert!(s.validate(&f).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn solved_residual_is_small(dx in -0.04f64..0.04, dy in -0.04f64..0.04) {
            let s = ActivitySpec::preperiodic(0, 2, 1);
            let cert = solve_misiurewicz(&quad(), &Param::one(c(-2. + dx, dy)), &s).unwrap();
            prop_assert!(cert.residual <= 1e-10);
        }
    }
}

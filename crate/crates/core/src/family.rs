//! Holomorphic map families, their instances at a parameter, orbits,
//! derivative cocycles, critical points and periodic points.

use nalgebra::DMatrix;
use num_complex::Complex64 as C;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::roots::{self, RootError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FamilyError {
    #[error("degree must be at least 2, got {0}")]
    InvalidDegree(usize),
    #[error("parameter has dimension {got}, family expects {expected}")]
    ParamDimension { expected: usize, got: usize },
    #[error("parameter coordinates must be finite")]
    NonFinite,
    #[error("lift is degenerate at this parameter (normalized resultant {resultant:e})")]
    DegenerateMap { resultant: f64 },
    #[error("root finding failed: {0}")]
    RootFinding(#[from] RootError),
    #[error("Newton iteration did not converge after {iterations} steps (last iterate {last})")]
    NoConvergence { iterations: usize, last: C },
    #[error("derivative vanishes along the orbit at index {index}")]
    CriticalOnOrbit { index: usize },
    #[error("invalid family specification: {0}")]
    InvalidSpec(String),
}

/// A point of the parameter space, `m` complex coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Param(pub Vec<C>);

impl Param {
    pub fn new(coords: Vec<C>) -> Result<Self, FamilyError> {
        if coords.is_empty() {
            return Err(FamilyError::ParamDimension { expected: 1, got: 0 });
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(FamilyError::NonFinite);
        }
        Ok(Param(coords))
    }

    pub fn one(c: C) -> Self {
        Param(vec![c])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[C] {
        &self.0
    }

    /// Euclidean norm in C^m.
    pub fn norm(&self) -> f64 {
        self.0.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn distance(&self, other: &Param) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// `self + t (other - self)`.
    pub fn lerp(&self, other: &Param, t: f64) -> Param {
        Param(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| a + (b - a) * t)
                .collect(),
        )
    }

    /// `self + h e_j`.
    pub fn shifted(&self, j: usize, h: C) -> Param {
        let mut p = self.clone();
        p.0[j] += h;
        p
    }
}

/// A point of the Riemann sphere.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Point1 {
    Finite(C),
    Infinity,
}

impl Point1 {
    pub fn finite(self) -> Option<C> {
        match self {
            Point1::Finite(z) => Some(z),
            Point1::Infinity => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub location: Point1,
    pub multiplicity: usize,
}

/// Monomial `coef * prod_k lambda_k^{powers[k]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coef: C,
    #[serde(default)]
    pub powers: Vec<u32>,
}

/// Polynomial in the parameter coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
pub struct LambdaPoly {
    pub terms: Vec<Monomial>,
}

impl LambdaPoly {
    pub fn constant(c: C) -> Self {
        LambdaPoly { terms: vec![Monomial { coef: c, powers: Vec::new() }] }
    }

    pub fn eval(&self, lambda: &Param) -> C {
        self.terms
            .iter()
            .map(|t| {
                t.powers
                    .iter()
                    .enumerate()
                    .fold(t.coef, |acc, (k, &e)| acc * lambda.0[k].powu(e))
            })
            .sum()
    }
}

/// `z -> N_lambda(z) / D_lambda(z)`, coefficients lowest degree first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RationalSpec {
    pub param_dim: usize,
    pub numerator: Vec<LambdaPoly>,
    pub denominator: Vec<LambdaPoly>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum FamilyKind {
    /// `z^d + lambda`.
    Unicritical,
    /// `(1/d) z^d + sum_{j=2}^{d-1} (-1)^{d-j} sigma_{d-j}(c)/j z^j + a^d`, `lambda = (c_1..c_{d-2}, a)`.
    BrannerHubbard,
    Rational(RationalSpec),
}

#[derive(Clone, Debug, PartialEq)]
pub struct MapFamily {
    pub degree: usize,
    pub kind: FamilyKind,
}

impl MapFamily {
    pub fn unicritical(degree: usize) -> Result<Self, FamilyError> {
        if degree < 2 {
            return Err(FamilyError::InvalidDegree(degree));
        }
        Ok(MapFamily { degree, kind: FamilyKind::Unicritical })
    }

    pub fn branner_hubbard(degree: usize) -> Result<Self, FamilyError> {
        if degree < 2 {
            return Err(FamilyError::InvalidDegree(degree));
        }
        Ok(MapFamily { degree, kind: FamilyKind::BrannerHubbard })
    }

    pub fn rational(degree: usize, spec: RationalSpec) -> Result<Self, FamilyError> {
        if degree < 2 {
            return Err(FamilyError::InvalidDegree(degree));
        }
        if spec.numerator.len() > degree + 1 || spec.denominator.len() > degree + 1 {
            return Err(FamilyError::InvalidSpec(format!(
                "coefficient lists longer than degree {degree} + 1"
            )));
        }
        if spec.param_dim == 0 {
            return Err(FamilyError::InvalidSpec("param_dim must be >= 1".into()));
        }
        Ok(MapFamily { degree, kind: FamilyKind::Rational(spec) })
    }

    pub fn param_dim(&self) -> usize {
        match &self.kind {
            FamilyKind::Unicritical => 1,
            FamilyKind::BrannerHubbard => self.degree - 1,
            FamilyKind::Rational(spec) => spec.param_dim,
        }
    }

    pub fn is_polynomial(&self) -> bool {
        !matches!(self.kind, FamilyKind::Rational(_))
    }

    /// Number of marked critical points (indexed, not merged).
    pub fn marked_count(&self) -> usize {
        match &self.kind {
            FamilyKind::Unicritical => 1,
            FamilyKind::BrannerHubbard => self.degree - 1,
            FamilyKind::Rational(_) => 2 * self.degree - 2,
        }
    }

    pub fn short_name(&self) -> String {
        match &self.kind {
            FamilyKind::Unicritical => format!("unicritical{}", self.degree),
            FamilyKind::BrannerHubbard => format!("branner_hubbard{}", self.degree),
            FamilyKind::Rational(_) => format!("rational{}", self.degree),
        }
    }

    /// Instantiates `f_lambda`.
    pub fn at(&self, lambda: &Param) -> Result<Map, FamilyError> {
        let m = self.param_dim();
        if lambda.dim() != m {
            return Err(FamilyError::ParamDimension { expected: m, got: lambda.dim() });
        }
        if lambda.0.iter().any(|c| !c.is_finite()) {
            return Err(FamilyError::NonFinite);
        }
        let d = self.degree;
        let zero = C::new(0.0, 0.0);
        let one = C::new(1.0, 0.0);
        let mut num = vec![zero; d + 1];
        let mut den = vec![zero; d + 1];
        let mut marked = Vec::new();
        match &self.kind {
            FamilyKind::Unicritical => {
                num[d] = one;
                num[0] = lambda.0[0];
                den[0] = one;
                marked.push(CriticalPoint { location: Point1::Finite(zero), multiplicity: d - 1 });
            }
            FamilyKind::BrannerHubbard => {
                let cs = &lambda.0[..d - 2];
                let a = lambda.0[d - 2];
                let sigma = elementary_symmetric(cs);
                num[d] = C::new(1.0 / d as f64, 0.0);
                for j in 2..d {
                    let sign = if (d - j) % 2 == 0 { 1.0 } else { -1.0 };
                    num[j] = sigma[d - j] * (sign / j as f64);
                }
                num[0] = a.powu(d as u32);
                den[0] = one;
                marked.push(CriticalPoint { location: Point1::Finite(zero), multiplicity: 1 });
                for &c in cs {
                    marked.push(CriticalPoint { location: Point1::Finite(c), multiplicity: 1 });
                }
            }
            FamilyKind::Rational(spec) => {
                for (j, p) in spec.numerator.iter().enumerate() {
                    num[j] = p.eval(lambda);
                }
                for (j, p) in spec.denominator.iter().enumerate() {
                    den[j] = p.eval(lambda);
                }
                let resultant = normalized_resultant(&num, &den);
                if !(resultant > 1e-12) {
                    return Err(FamilyError::DegenerateMap { resultant });
                }
            }
        }
        let polynomial = self.is_polynomial();
        let max_coef = num.iter().map(|a| a.norm()).fold(0.0, f64::max);
        let escape_radius = if polynomial { (2.0 * max_coef).max(10.0) } else { f64::INFINITY };
        let mut num_rev = num.clone();
        num_rev.reverse();
        let mut den_rev = den.clone();
        den_rev.reverse();
        Ok(Map {
            degree: d,
            num,
            den,
            num_rev,
            den_rev,
            polynomial,
            marked,
            escape_radius,
        })
    }
}

/// `sigma[k]` = k-th elementary symmetric polynomial of `xs`, `sigma[0] = 1`.
pub fn elementary_symmetric(xs: &[C]) -> Vec<C> {
    let mut sigma = vec![C::new(0.0, 0.0); xs.len() + 1];
    sigma[0] = C::new(1.0, 0.0);
    for (i, &x) in xs.iter().enumerate() {
        for k in (1..=i + 1).rev() {
            let prev = sigma[k - 1];
            sigma[k] += prev * x;
        }
    }
    sigma
}

/// `|Res(N^h, D^h)| / (|N|^d |D|^d)` for the homogeneous forms of formal degree `d`.
fn normalized_resultant(num: &[C], den: &[C]) -> f64 {
    let d = num.len() - 1;
    let n = 2 * d;
    let mut m = DMatrix::<C>::zeros(n, n);
    // rows 0..d: shifts of N (highest degree first), rows d..2d: shifts of D
    for r in 0..d {
        for j in 0..=d {
            m[(r, r + j)] = num[d - j];
            m[(d + r, r + j)] = den[d - j];
        }
    }
    let nn: f64 = num.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    let dn: f64 = den.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    if nn == 0.0 || dn == 0.0 {
        return 0.0;
    }
    m.determinant().norm() / (nn.powi(d as i32) * dn.powi(d as i32))
}

/// A family member `f_lambda` with coefficients resolved.
#[derive(Clone, Debug)]
pub struct Map {
    degree: usize,
    num: Vec<C>,
    den: Vec<C>,
    num_rev: Vec<C>,
    den_rev: Vec<C>,
    polynomial: bool,
    marked: Vec<CriticalPoint>,
    escape_radius: f64,
}

/// Tolerance used to merge coincident marked critical points.
const MERGE_TOL: f64 = 1e-12;

impl Map {
    /// Polynomial instance from explicit coefficients (lowest degree first).
    pub fn from_polynomial(coeffs: Vec<C>) -> Result<Self, FamilyError> {
        let deg = roots::effective_degree(&coeffs, 0.0).unwrap_or(0);
        if deg < 2 {
            return Err(FamilyError::InvalidDegree(deg));
        }
        let num = coeffs[..=deg].to_vec();
        let mut den = vec![C::new(0.0, 0.0); deg + 1];
        den[0] = C::new(1.0, 0.0);
        let dp = roots::derivative(&num);
        let crit = roots::poly_roots(&dp)?;
        let marked = crit
            .into_iter()
            .map(|c| CriticalPoint { location: Point1::Finite(c), multiplicity: 1 })
            .collect();
        let max_coef = num.iter().map(|a| a.norm()).fold(0.0, f64::max);
        let mut num_rev = num.clone();
        num_rev.reverse();
        let mut den_rev = den.clone();
        den_rev.reverse();
        Ok(Map {
            degree: deg,
            num,
            den,
            num_rev,
            den_rev,
            polynomial: true,
            marked,
            escape_radius: (2.0 * max_coef).max(10.0),
        })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn is_polynomial(&self) -> bool {
        self.polynomial
    }

    pub fn numerator(&self) -> &[C] {
        &self.num
    }

    pub fn denominator(&self) -> &[C] {
        &self.den
    }

    /// Leading coefficient of a polynomial instance.
    pub fn leading(&self) -> C {
        self.num[self.degree]
    }

    pub fn escape_radius(&self) -> f64 {
        self.escape_radius
    }

    pub fn eval(&self, z: C) -> C {
        if self.polynomial {
            return roots::horner(&self.num, z);
        }
        if z.norm() <= 1.0 {
            roots::horner(&self.num, z) / roots::horner(&self.den, z)
        } else {
            let w = z.inv();
            roots::horner(&self.num_rev, w) / roots::horner(&self.den_rev, w)
        }
    }

    /// `(f(z), f'(z))`.
    pub fn eval_deriv(&self, z: C) -> (C, C) {
        if self.polynomial {
            return roots::horner_deriv(&self.num, z);
        }
        if z.norm() <= 1.0 {
            let (n, dn) = roots::horner_deriv(&self.num, z);
            let (d, dd) = roots::horner_deriv(&self.den, z);
            (n / d, (dn * d - n * dd) / (d * d))
        } else {
            self.eval_deriv_far(z)
        }
    }

    /// Evaluation in the reciprocal chart `w = 1/z`.
    pub fn eval_deriv_far(&self, z: C) -> (C, C) {
        let w = z.inv();
        let (p, dp) = roots::horner_deriv(&self.num_rev, w);
        let (q, dq) = roots::horner_deriv(&self.den_rev, w);
        (p / q, (dp * q - p * dq) / (q * q) * (-w * w))
    }

    /// Evaluation in the affine chart regardless of `|z|`.
    pub fn eval_deriv_near(&self, z: C) -> (C, C) {
        let (n, dn) = roots::horner_deriv(&self.num, z);
        let (d, dd) = roots::horner_deriv(&self.den, z);
        (n / d, (dn * d - n * dd) / (d * d))
    }

    pub fn deriv(&self, z: C) -> C {
        self.eval_deriv(z).1
    }

    /// Homogeneous lift `F(u, v) = (N^h(u, v), D^h(u, v))`.
    #[inline]
    pub fn lift(&self, u: C, v: C) -> (C, C) {
        let d = self.degree;
        if self.polynomial {
            // v^d p(u/v) by homogeneous Horner; second component v^d
            let mut acc = self.num[d];
            let mut vp = C::new(1.0, 0.0);
            for j in (0..d).rev() {
                vp *= v;
                acc = acc * u + self.num[j] * vp;
            }
            (acc, vp)
        } else {
            let mut an = self.num[d];
            let mut ad = self.den[d];
            let mut vp = C::new(1.0, 0.0);
            for j in (0..d).rev() {
                vp *= v;
                an = an * u + self.num[j] * vp;
                ad = ad * u + self.den[j] * vp;
            }
            (an, ad)
        }
    }

    /// Marked critical points in index order; coincident markings are not merged.
    pub fn marked_critical_points(&self) -> Result<Vec<CriticalPoint>, FamilyError> {
        if self.polynomial {
            return Ok(self.marked.clone());
        }
        // zeros of the Wronskian N'D - ND'; a degree deficit sits at infinity
        let w = roots::sub(
            &roots::mul(&roots::derivative(&self.num), &self.den),
            &roots::mul(&self.num, &roots::derivative(&self.den)),
        );
        let full = 2 * self.degree - 2;
        let deg = roots::effective_degree(&w, 1e-13).unwrap_or(0);
        let finite = roots::poly_roots(&w[..=deg.min(w.len() - 1)])?;
        let mut out: Vec<CriticalPoint> = finite
            .into_iter()
            .map(|c| CriticalPoint { location: Point1::Finite(c), multiplicity: 1 })
            .collect();
        for _ in deg..full {
            out.push(CriticalPoint { location: Point1::Infinity, multiplicity: 1 });
        }
        Ok(out)
    }

    /// Critical points with coincident ones merged; multiplicities sum to
    /// `d - 1` (polynomial kinds) or `2d - 2` (rational).
    pub fn critical_points(&self) -> Result<Vec<CriticalPoint>, FamilyError> {
        let marked = self.marked_critical_points()?;
        let mut merged: Vec<CriticalPoint> = Vec::new();
        for cp in marked {
            let hit = merged.iter_mut().find(|m| match (m.location, cp.location) {
                (Point1::Finite(a), Point1::Finite(b)) => (a - b).norm() <= MERGE_TOL * a.norm().max(1.0),
                (Point1::Infinity, Point1::Infinity) => true,
                _ => false,
            });
            match hit {
                Some(m) => m.multiplicity += cp.multiplicity,
                None => merged.push(cp),
            }
        }
        Ok(merged)
    }

    /// Finite critical points with multiplicity, flattened (used for proximity tests).
    pub fn finite_critical_points(&self) -> Vec<C> {
        self.marked_critical_points()
            .map(|v| v.into_iter().filter_map(|c| c.location.finite()).collect())
            .unwrap_or_default()
    }

    /// The `k`-th preimage `((w - c)/a)^{1/d} e^{2 pi i k/d}` when the instance has the form `a z^d + c`.
    #[inline]
    pub fn unicritical_preimage(&self, w: C, k: usize) -> Option<C> {
        let d = self.degree;
        if !self.polynomial || self.num[1..d].iter().any(|a| a.norm() != 0.0) {
            return None;
        }
        let base = ((w - self.num[0]) / self.num[d]).powf(1.0 / d as f64);
        if k == 0 {
            return Some(base);
        }
        Some(base * C::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 / d as f64))
    }

    /// All preimages of `w`, repeated according to multiplicity.
    pub fn preimages(&self, w: C) -> Result<Vec<C>, FamilyError> {
        let d = self.degree;
        if self.unicritical_preimage(w, 0).is_some() {
            return Ok((0..d).map(|k| self.unicritical_preimage(w, k).unwrap()).collect());
        }
        let eq: Vec<C> = self.num.iter().zip(&self.den).map(|(&n, &dd)| n - w * dd).collect();
        let mut r = roots::poly_roots(&eq)?;
        // a degree drop means the missing preimages are at infinity; not representable here
        if r.len() < d {
            return Err(FamilyError::RootFinding(RootError::NoConvergence { residual: f64::INFINITY }));
        }
        r.truncate(d);
        Ok(r)
    }

    /// Forward orbit of `z0` for `n` steps with its derivative cocycle.
    pub fn orbit(&self, z0: C, n: usize) -> Orbit {
        let mut points = Vec::with_capacity(n + 1);
        let mut log_deriv = Vec::with_capacity(n + 1);
        let mut arg_deriv = Vec::with_capacity(n + 1);
        let mut z = z0;
        let mut lsum = 0.0;
        let mut asum = 0.0;
        points.push(z);
        log_deriv.push(0.0);
        arg_deriv.push(0.0);
        let mut escaped_at = None;
        if self.polynomial && z.norm() > self.escape_radius {
            escaped_at = Some(0);
        }
        if escaped_at.is_none() {
            for k in 1..=n {
                let (fz, dz) = self.eval_deriv(z);
                lsum += dz.norm().ln();
                asum += dz.arg();
                z = fz;
                points.push(z);
                log_deriv.push(lsum);
                arg_deriv.push(asum);
                if self.polynomial && z.norm() > self.escape_radius {
                    escaped_at = Some(k);
                    break;
                }
            }
        }
        Orbit { start: z0, points, log_deriv, arg_deriv, escaped_at }
    }

    /// `f^n(z)` without bookkeeping.
    pub fn iterate(&self, mut z: C, n: usize) -> C {
        for _ in 0..n {
            z = self.eval(z);
        }
        z
    }

    /// `(f^n(z), (f^n)'(z))`.
    pub fn iterate_deriv(&self, mut z: C, n: usize) -> (C, C) {
        let mut d = C::new(1.0, 0.0);
        for _ in 0..n {
            let (fz, dz) = self.eval_deriv(z);
            d *= dz;
            z = fz;
        }
        (z, d)
    }

    /// Product of `f'` along `segment`, in log-polar form.
    pub fn multiplier(&self, segment: &[C]) -> Result<LogPolar, FamilyError> {
        let mut out = LogPolar::one();
        for (index, &z) in segment.iter().enumerate() {
            if !z.is_finite() {
                return Err(FamilyError::NonFinite);
            }
            let dz = self.deriv(z);
            if dz.norm() < 1e-14 {
                return Err(FamilyError::CriticalOnOrbit { index });
            }
            out = out.mul_complex(dz);
        }
        Ok(out)
    }

    /// Newton solve of `f^p(z) = z` from `seed`, reduced to the minimal period.
    pub fn find_periodic(&self, period: usize, seed: C) -> Result<PeriodicPoint, FamilyError> {
        assert!(period >= 1, "period must be positive");
        let mut z = newton_cycle(self, period, seed)?;
        let tol = NEWTON_REL_TOL * z.norm().max(1.0);
        let mut minimal = period;
        for q in (1..period).filter(|q| period % q == 0) {
            if (self.iterate(z, q) - z).norm() <= tol {
                minimal = q;
                z = newton_cycle(self, q, z).unwrap_or(z);
                break;
            }
        }
        let orbit = self.orbit(z, minimal - 1);
        let cycle = orbit.points;
        let multiplier = self.multiplier(&cycle).unwrap_or_else(|_| LogPolar {
            log_mod: f64::NEG_INFINITY,
            arg: 0.0,
        });
        Ok(PeriodicPoint { location: z, period: minimal, multiplier, cycle })
    }
}

pub const NEWTON_REL_TOL: f64 = 1e-13;
const NEWTON_MAX_ITER: usize = 100;

fn newton_cycle(map: &Map, period: usize, seed: C) -> Result<C, FamilyError> {
    let mut z = seed;
    for _ in 0..NEWTON_MAX_ITER {
        let (fp, dfp) = map.iterate_deriv(z, period);
        let g = fp - z;
        let dg = dfp - C::new(1.0, 0.0);
        if dg.norm() == 0.0 || !g.is_finite() {
            break;
        }
        let step = g / dg;
        z -= step;
        if step.norm() < NEWTON_REL_TOL * z.norm().max(1.0) {
            return Ok(z);
        }
    }
    Err(FamilyError::NoConvergence { iterations: NEWTON_MAX_ITER, last: z })
}

/// A complex number stored as `(log |w|, arg w)` with the argument unwrapped.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogPolar {
    pub log_mod: f64,
    pub arg: f64,
}

impl LogPolar {
    pub fn one() -> Self {
        LogPolar { log_mod: 0.0, arg: 0.0 }
    }

    pub fn from_complex(w: C) -> Self {
        LogPolar { log_mod: w.norm().ln(), arg: w.arg() }
    }

    pub fn mul_complex(self, w: C) -> Self {
        LogPolar { log_mod: self.log_mod + w.norm().ln(), arg: self.arg + w.arg() }
    }

    pub fn mul(self, o: LogPolar) -> Self {
        LogPolar { log_mod: self.log_mod + o.log_mod, arg: self.arg + o.arg }
    }

    pub fn powi(self, n: i32) -> Self {
        LogPolar { log_mod: self.log_mod * n as f64, arg: self.arg * n as f64 }
    }

    pub fn modulus(self) -> f64 {
        self.log_mod.exp()
    }

    pub fn to_complex(self) -> C {
        C::from_polar(self.log_mod.exp(), self.arg)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Orbit {
    pub start: C,
    pub points: Vec<C>,
    /// `log_deriv[k] = log |(f^k)'(z_0)|`.
    pub log_deriv: Vec<f64>,
    pub arg_deriv: Vec<f64>,
    /// Index of the first point beyond the escape radius, if any.
    pub escaped_at: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodicPoint {
    pub location: C,
    pub period: usize,
    pub multiplier: LogPolar,
    /// The cycle starting at `location`, `period` points.
    pub cycle: Vec<C>,
}

pub fn eval_map(family: &MapFamily, lambda: &Param, z: C) -> Result<C, FamilyError> {
    Ok(family.at(lambda)?.eval(z))
}

pub fn orbit(family: &MapFamily, lambda: &Param, z0: C, n: usize) -> Result<Orbit, FamilyError> {
    Ok(family.at(lambda)?.orbit(z0, n))
}

pub fn critical_points(family: &MapFamily, lambda: &Param) -> Result<Vec<CriticalPoint>, FamilyError> {
    family.at(lambda)?.critical_points()
}

pub fn find_periodic(
    family: &MapFamily,
    lambda: &Param,
    period: usize,
    seed: C,
) -> Result<PeriodicPoint, FamilyError> {
    family.at(lambda)?.find_periodic(period, seed)
}

pub fn multiplier(family: &MapFamily, lambda: &Param, segment: &[C]) -> Result<LogPolar, FamilyError> {
    family.at(lambda)?.multiplier(segment)
}

// ---------------------------------------------------------------------------
// JSON family documents

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum CoefDoc {
    Constant([f64; 2]),
    Poly { terms: Vec<TermDoc> },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct TermDoc {
    coef: [f64; 2],
    #[serde(default)]
    powers: Vec<u32>,
}

/// `{"kind": "unicritical" | "branner_hubbard" | "rational", "degree": d, "params": [[re, im], ...], ...}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FamilyDoc {
    pub kind: String,
    pub degree: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub param_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    numerator: Option<Vec<CoefDoc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    denominator: Option<Vec<CoefDoc>>,
}

fn coef_to_poly(c: &CoefDoc) -> LambdaPoly {
    match c {
        CoefDoc::Constant([re, im]) => LambdaPoly::constant(C::new(*re, *im)),
        CoefDoc::Poly { terms } => LambdaPoly {
            terms: terms
                .iter()
                .map(|t| Monomial { coef: C::new(t.coef[0], t.coef[1]), powers: t.powers.clone() })
                .collect(),
        },
    }
}

fn poly_to_coef(p: &LambdaPoly) -> CoefDoc {
    CoefDoc::Poly {
        terms: p
            .terms
            .iter()
            .map(|t| TermDoc { coef: [t.coef.re, t.coef.im], powers: t.powers.clone() })
            .collect(),
    }
}

impl FamilyDoc {
    /// Parses a family document; returns the family and the optional default parameter.
    pub fn parse(json: &str) -> Result<(MapFamily, Option<Param>), FamilyError> {
        let doc: FamilyDoc =
            serde_json::from_str(json).map_err(|e| FamilyError::InvalidSpec(e.to_string()))?;
        doc.resolve()
    }

    pub fn resolve(&self) -> Result<(MapFamily, Option<Param>), FamilyError> {
        let family = match self.kind.as_str() {
            "unicritical" => MapFamily::unicritical(self.degree)?,
            "branner_hubbard" => MapFamily::branner_hubbard(self.degree)?,
            "rational" => {
                let numerator = self
                    .numerator
                    .as_ref()
                    .ok_or_else(|| FamilyError::InvalidSpec("rational family needs numerator".into()))?
                    .iter()
                    .map(coef_to_poly)
                    .collect();
                let denominator = self
                    .denominator
                    .as_ref()
                    .ok_or_else(|| FamilyError::InvalidSpec("rational family needs denominator".into()))?
                    .iter()
                    .map(coef_to_poly)
                    .collect();
                let param_dim = self
                    .param_dim
                    .or_else(|| self.params.as_ref().map(|p| p.len()))
                    .unwrap_or(1);
                MapFamily::rational(self.degree, RationalSpec { param_dim, numerator, denominator })?
            }
            other => return Err(FamilyError::InvalidSpec(format!("unknown kind {other:?}"))),
        };
        let params = match &self.params {
            Some(p) => {
                let param = Param::new(p.iter().map(|[re, im]| C::new(*re, *im)).collect())?;
                if param.dim() != family.param_dim() {
                    return Err(FamilyError::ParamDimension { expected: family.param_dim(), got: param.dim() });
                }
                Some(param)
            }
            None => None,
        };
        Ok((family, params))
    }

    pub fn from_family(family: &MapFamily, params: Option<&Param>) -> Self {
        let (kind, numerator, denominator, param_dim) = match &family.kind {
            FamilyKind::Unicritical => ("unicritical", None, None, None),
            FamilyKind::BrannerHubbard => ("branner_hubbard", None, None, None),
            FamilyKind::Rational(spec) => (
                "rational",
                Some(spec.numerator.iter().map(poly_to_coef).collect()),
                Some(spec.denominator.iter().map(poly_to_coef).collect()),
                Some(spec.param_dim),
            ),
        };
        FamilyDoc {
            kind: kind.to_string(),
            degree: family.degree,
            params: params.map(|p| p.0.iter().map(|c| [c.re, c.im]).collect()),
            param_dim,
            numerator,
            denominator,
        }
    }
}

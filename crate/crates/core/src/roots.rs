//! Polynomial root finding (Aberth–Ehrlich) and small polynomial helpers.
//!
//! Coefficient vectors are stored lowest degree first throughout the crate.

use num_complex::Complex64 as C;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RootError {
    #[error("polynomial has no nonzero coefficient")]
    ZeroPolynomial,
    #[error("root iteration did not converge (residual {residual:e})")]
    NoConvergence { residual: f64 },
}

/// Horner evaluation of `p(z)`.
pub fn horner(coeffs: &[C], z: C) -> C {
    coeffs.iter().rev().fold(C::new(0.0, 0.0), |acc, &a| acc * z + a)
}

/// Horner evaluation of `p(z)` and `p'(z)` in one pass.
pub fn horner_deriv(coeffs: &[C], z: C) -> (C, C) {
    let mut p = C::new(0.0, 0.0);
    let mut dp = C::new(0.0, 0.0);
    for &a in coeffs.iter().rev() {
        dp = dp * z + p;
        p = p * z + a;
    }
    (p, dp)
}

/// Coefficients of `p'`.
pub fn derivative(coeffs: &[C]) -> Vec<C> {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(j, &a)| a * j as f64)
        .collect()
}

/// Product of two coefficient vectors.
pub fn mul(a: &[C], b: &[C]) -> Vec<C> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![C::new(0.0, 0.0); a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

pub fn sub(a: &[C], b: &[C]) -> Vec<C> {
    let n = a.len().max(b.len());
    (0..n)
        .map(|j| {
            a.get(j).copied().unwrap_or_default() - b.get(j).copied().unwrap_or_default()
        })
        .collect()
}

/// Degree after dropping leading coefficients below `eps` relative to the largest.
pub fn effective_degree(coeffs: &[C], eps: f64) -> Option<usize> {
    let scale = coeffs.iter().map(|a| a.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return None;
    }
    coeffs.iter().rposition(|a| a.norm() > eps * scale)
}

/// All complex roots of `p`, repeated according to multiplicity.
///
/// Multiple roots converge linearly under Aberth's iteration; they are accepted
/// once the residual is at roundoff level.
pub fn poly_roots(coeffs: &[C]) -> Result<Vec<C>, RootError> {
    let deg = effective_degree(coeffs, 1e-14).ok_or(RootError::ZeroPolynomial)?;
    if deg == 0 {
        return Ok(Vec::new());
    }
    let p = &coeffs[..=deg];
    let lead = p[deg];
    if deg == 1 {
        return Ok(vec![-p[0] / lead]);
    }
    let bound = 1.0
        + p[..deg]
            .iter()
            .map(|a| (a / lead).norm())
            .fold(0.0, f64::max);
    let radius = bound.min(
        // Fujiwara-type tighter estimate
        2.0 * p[..deg]
            .iter()
            .enumerate()
            .map(|(j, a)| (a / lead).norm().powf(1.0 / (deg - j) as f64))
            .fold(0.0, f64::max),
    );
    let radius = if radius > 0.0 { radius } else { 1.0 };
    let mut z: Vec<C> = (0..deg)
        .map(|k| {
            let t = 2.0 * std::f64::consts::PI * k as f64 / deg as f64 + 0.4;
            C::from_polar(radius, t)
        })
        .collect();

    let mut converged = false;
    for _ in 0..800 {
        let mut max_step = 0.0_f64;
        for k in 0..deg {
            let (pv, dpv) = horner_deriv(p, z[k]);
            if pv == C::new(0.0, 0.0) {
                continue;
            }
            let ratio = pv / dpv;
            let sum: C = (0..deg)
                .filter(|&j| j != k)
                .map(|j| {
                    let diff = z[k] - z[j];
                    if diff == C::new(0.0, 0.0) {
                        C::new(0.0, 0.0)
                    } else {
                        diff.inv()
                    }
                })
                .sum();
            let step = ratio / (C::new(1.0, 0.0) - ratio * sum);
            if step.is_finite() {
                z[k] -= step;
                max_step = max_step.max(step.norm() / z[k].norm().max(1.0));
            } else {
                z[k] += C::new(1e-3, 1e-3);
                max_step = f64::INFINITY;
            }
        }
        if max_step < 1e-15 {
            converged = true;
            break;
        }
    }

    let scale: f64 = p.iter().map(|a| a.norm()).sum();
    let residual = z
        .iter()
        .map(|&r| horner(p, r).norm() / (scale * r.norm().max(1.0).powi(deg as i32)))
        .fold(0.0, f64::max);
    if !converged && residual > 1e-10 {
        return Err(RootError::NoConvergence { residual });
    }
    Ok(z)
}

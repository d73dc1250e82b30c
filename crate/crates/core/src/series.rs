//! Truncated power series over C, coefficients lowest degree first.

use num_complex::Complex64 as C;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub coeffs: Vec<C>,
}

impl Series {
    pub fn zero(n: usize) -> Self {
        Series { coeffs: vec![C::new(0.0, 0.0); n + 1] }
    }

    /// `z`, truncated at degree `n`.
    pub fn identity(n: usize) -> Self {
        let mut s = Series::zero(n);
        if n >= 1 {
            s.coeffs[1] = C::new(1.0, 0.0);
        }
        s
    }

    pub fn from_coeffs(mut coeffs: Vec<C>, n: usize) -> Self {
        coeffs.resize(n + 1, C::new(0.0, 0.0));
        Series { coeffs }
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn eval(&self, z: C) -> C {
        self.coeffs.iter().rev().fold(C::new(0.0, 0.0), |acc, &a| acc * z + a)
    }

    pub fn scale(&self, s: C) -> Self {
        Series { coeffs: self.coeffs.iter().map(|a| a * s).collect() }
    }

    pub fn mul(&self, other: &Series) -> Self {
        let n = self.order();
        let mut out = Series::zero(n);
        for (i, &a) in self.coeffs.iter().enumerate() {
            if a == C::new(0.0, 0.0) {
                continue;
            }
            for (j, &b) in other.coeffs.iter().enumerate().take(n + 1 - i) {
                out.coeffs[i + j] += a * b;
            }
        }
        out
    }

    /// `self(inner(z))`; `inner` must vanish at 0.
    pub fn compose(&self, inner: &Series) -> Self {
        debug_assert!(inner.coeffs[0] == C::new(0.0, 0.0));
        let n = self.order();
        let mut out = Series::zero(n);
        for &a in self.coeffs.iter().rev() {
            out = out.mul(inner);
            out.coeffs[0] += a;
        }
        out
    }

    /// Compositional inverse of a series with `s(0) = 0`, `s'(0) != 0`.
    pub fn reversion(&self) -> Self {
        let n = self.order();
        let a1 = self.coeffs[1];
        assert!(a1 != C::new(0.0, 0.0), "reversion needs a nonzero linear term");
        let mut h = Series::zero(n);
        h.coeffs[1] = a1.inv();
        // fix one coefficient at a time; s(h(z)) - z has its lowest error at degree k
        for k in 2..=n {
            let e = self.compose(&h).coeffs[k];
            h.coeffs[k] -= e / a1;
        }
        h
    }

    /// Largest `|a_k| r^k` over `k >= 2`.
    pub fn scaled_tail(&self, r: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .skip(2)
            .map(|(k, a)| a.norm() * r.powi(k as i32))
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C {
        C::new(re, im)
    }

    #[test]
    fn reversion_inverts_composition() {
        let s = Series::from_coeffs(vec![c(0., 0.), c(2., 1.), c(0.5, 0.), c(-0.3, 0.2)], 10);
        let h = s.reversion();
        let id = s.compose(&h);
        for k in 0..=10 {
            let want = if k == 1 { c(1., 0.) } else { c(0., 0.) };
            assert!((id.coeffs[k] - want).norm() < 1e-12, "k={k}");
        }
    }

    #[test]
    fn inverse_of_exp_minus_one_is_log1p() {
        // e^z - 1 reverts to log(1+z) = sum (-1)^{k+1} z^k / k
        let mut fact = 1.0;
        let coeffs: Vec<C> = (0..=8)
            .map(|k| {
                if k > 0 {
                    fact *= k as f64;
                }
                if k == 0 { c(0., 0.) } else { c(1.0 / fact, 0.) }
            })
            .collect();
        let h = Series::from_coeffs(coeffs, 8).reversion();
        for k in 1..=8 {
            let want = if k % 2 == 1 { 1.0 } else { -1.0 } / k as f64;
            assert!((h.coeffs[k].re - want).abs() < 1e-13);
        }
    }
}

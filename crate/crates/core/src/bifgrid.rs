//! Parameter-box scans of Lyapunov and Green fields, the discrete `dd^c`
//! operator, mollified Monge–Ampère densities in two parameters, ball masses
//! and the dimension estimators built on them.

use std::collections::HashSet;

use num_complex::Complex64 as C;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::family::{FamilyError, MapFamily, Param};
use crate::potential::{self, PotentialError, DEFAULT_GREEN_TOL};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("resolution must be at least 8 cells per axis, got {0}")]
    ResolutionTooSmall(usize),
    #[error("operation needs {expected} complex parameters, field has {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("radius {radius:e} is below 3 cell widths ({h:e} each)")]
    ResolutionExceeded { radius: f64, h: f64 },
    #[error("mollify radius {radius:e} is below 2 cell widths ({h:e})")]
    MollifyTooSmall { radius: f64, h: f64 },
    #[error("ball of radius {radius} around {center} leaves the box")]
    BallOutsideBox { center: C, radius: f64 },
    #[error("only {usable} radii carry positive mass (need 4)")]
    DegenerateProfile { usable: usize },
    #[error("box counting needs >= 4 scales above twice the point spacing, got {usable}")]
    InsufficientScales { usable: usize },
    #[error("box counting needs >= 1000 points, got {0}")]
    TooFewPoints(usize),
    #[error(transparent)]
    Family(#[from] FamilyError),
    #[error(transparent)]
    Potential(#[from] PotentialError),
}

type Result<T> = std::result::Result<T, GridError>;

/// Axis-aligned box in C^m: `center_j +- (half_width_j.re, i half_width_j.im)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridBox {
    pub center: Vec<C>,
    pub half_width: Vec<C>,
}

impl GridBox {
    pub fn new(center: Vec<C>, half_width: Vec<C>) -> Self {
        assert_eq!(center.len(), half_width.len());
        GridBox { center, half_width }
    }

    /// Square box in one complex parameter.
    pub fn square(center: C, half: f64) -> Self {
        GridBox { center: vec![center], half_width: vec![C::new(half, half)] }
    }

    /// `[re0, re1] x [im0, im1]`.
    pub fn rect(re0: f64, re1: f64, im0: f64, im1: f64) -> Self {
        GridBox {
            center: vec![C::new(0.5 * (re0 + re1), 0.5 * (im0 + im1))],
            half_width: vec![C::new(0.5 * (re1 - re0), 0.5 * (im1 - im0))],
        }
    }

    /// Complex dimension `m`.
    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn axes(&self) -> usize {
        2 * self.dim()
    }

    /// Lower corner and half width of real axis `a` (`2j` real part, `2j+1` imaginary part of `lambda_j`).
    fn axis(&self, a: usize) -> (f64, f64) {
        let (c, w) = (self.center[a / 2], self.half_width[a / 2]);
        if a % 2 == 0 {
            (c.re - w.re, w.re)
        } else {
            (c.im - w.im, w.im)
        }
    }

    pub fn cell_widths(&self, n: usize) -> Vec<f64> {
        (0..self.axes()).map(|a| 2.0 * self.axis(a).1 / n as f64).collect()
    }

    pub fn cell_volume(&self, n: usize) -> f64 {
        self.cell_widths(n).iter().product()
    }

    /// Coordinate of cell `i` (center) along real axis `a`.
    pub fn coord(&self, n: usize, a: usize, i: usize) -> f64 {
        let (lo, hw) = self.axis(a);
        lo + (i as f64 + 0.5) * 2.0 * hw / n as f64
    }

    pub fn cell_center(&self, n: usize, idx: &[usize]) -> Param {
        Param(
            (0..self.dim())
                .map(|j| C::new(self.coord(n, 2 * j, idx[2 * j]), self.coord(n, 2 * j + 1, idx[2 * j + 1])))
                .collect(),
        )
    }

    pub fn contains_disk(&self, center: C, r: f64) -> bool {
        let (x0, wx) = self.axis(0);
        let (y0, wy) = self.axis(1);
        center.re - r >= x0 && center.re + r <= x0 + 2.0 * wx && center.im - r >= y0 && center.im + r <= y0 + 2.0 * wy
    }
}

/// Flat index with real axis 0 fastest.
fn unflatten(mut k: usize, n: usize, axes: usize) -> Vec<usize> {
    let mut idx = vec![0; axes];
    for slot in idx.iter_mut() {
        *slot = k % n;
        k /= n;
    }
    idx
}

fn strides(n: usize, axes: usize) -> Vec<usize> {
    (0..axes).map(|a| n.pow(a as u32)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldMeta {
    pub name: String,
    pub params: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridField {
    pub grid: GridBox,
    pub resolution: usize,
    /// One value per cell, real axis 0 fastest; NaN marks failed cells.
    pub values: Vec<f64>,
    pub meta: FieldMeta,
    pub nan_cells: usize,
}

impl GridField {
    /// Evaluates `f` at every cell center, in parallel over rows.
    pub fn from_fn<F>(grid: GridBox, n: usize, meta: FieldMeta, f: F) -> Result<Self>
    where
        F: Fn(&Param) -> f64 + Sync,
    {
        if n < 8 {
            return Err(GridError::ResolutionTooSmall(n));
        }
        let axes = grid.axes();
        let total = n.pow(axes as u32);
        let mut values = vec![0.0; total];
        values.par_chunks_mut(n).enumerate().for_each(|(row, chunk)| {
            let mut idx = unflatten(row * n, n, axes);
            for (i, v) in chunk.iter_mut().enumerate() {
                idx[0] = i;
                *v = f(&grid.cell_center(n, &idx));
            }
        });
        let nan_cells = values.iter().filter(|v| !v.is_finite()).count();
        for v in values.iter_mut().filter(|v| !v.is_finite()) {
            *v = f64::NAN;
        }
        Ok(GridField { grid, resolution: n, values, meta, nan_cells })
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    /// `a self + b other`, cellwise.
    pub fn combine(&self, a: f64, other: &GridField, b: f64, name: &str) -> GridField {
        assert_eq!(self.values.len(), other.values.len());
        let values: Vec<f64> = self.values.iter().zip(&other.values).map(|(u, v)| a * u + b * v).collect();
        GridField {
            grid: self.grid.clone(),
            resolution: self.resolution,
            nan_cells: values.iter().filter(|v| v.is_nan()).count(),
            values,
            meta: FieldMeta { name: name.into(), params: serde_json::json!({"a": a, "b": b}) },
        }
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().filter(|v| v.is_finite()).fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().filter(|v| v.is_finite()).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// How the Lyapunov field is computed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum LyapunovMode {
    /// `log d + sum_j G(c_j)`.
    GreenSum,
    /// Backward-orbit Monte Carlo per cell.
    MonteCarlo { n_points: usize, depth: usize, seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "field", content = "index", rename_all = "snake_case")]
pub enum FieldKind {
    Lyapunov,
    Green(usize),
    Activity(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    pub lyapunov: LyapunovMode,
    pub green_tol: f64,
    /// Mollification radius for activity flags, in cell widths.
    pub mollify_cells: f64,
    /// Activity flag threshold, relative to the largest local mass.
    pub activity_threshold: f64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig { lyapunov: LyapunovMode::GreenSum, green_tol: DEFAULT_GREEN_TOL, mollify_cells: 3.0, activity_threshold: 1e-3 }
    }
}

pub fn scan_field(family: &MapFamily, grid: &GridBox, n: usize, which: &FieldKind, cfg: &ScanConfig) -> Result<GridField> {
    if grid.dim() != family.param_dim() {
        return Err(GridError::DimensionMismatch { expected: family.param_dim(), got: grid.dim() });
    }
    let meta = FieldMeta {
        name: match which {
            FieldKind::Lyapunov => "lyapunov".to_string(),
            FieldKind::Green(j) => format!("green{j}"),
            FieldKind::Activity(j) => format!("activity{j}"),
        },
        params: serde_json::json!({
            "family": family.short_name(),
            "grid": grid,
            "resolution": n,
            "config": cfg,
        }),
    };
    let tol = cfg.green_tol;
    match which {
        FieldKind::Lyapunov => {
            let mode = cfg.lyapunov.clone();
            let stride_seed = |lam: &Param| {
                // cell-local seed from the parameter bits
                lam.0.iter().fold(0u64, |h, z| {
                    h.rotate_left(17) ^ z.re.to_bits().wrapping_mul(0x9e3779b97f4a7c15) ^ z.im.to_bits()
                })
            };
            GridField::from_fn(grid.clone(), n, meta, |lam| {
                let Ok(map) = family.at(lam) else { return f64::NAN };
                match &mode {
                    LyapunovMode::GreenSum => potential::lyapunov_from_green(&map, tol).unwrap_or(f64::NAN),
                    LyapunovMode::MonteCarlo { n_points, depth, seed } => {
                        potential::lyapunov_mc_map(&map, *n_points, *depth, seed ^ stride_seed(lam))
                            .map(|e| e.value)
                            .unwrap_or(f64::NAN)
                    }
                }
            })
        }
        FieldKind::Green(j) => GridField::from_fn(grid.clone(), n, meta, |lam| {
            family
                .at(lam)
                .ok()
                .and_then(|m| potential::critical_green(&m, *j, tol).ok())
                .unwrap_or(f64::NAN)
        }),
        FieldKind::Activity(j) => {
            let g = scan_field(family, grid, n, &FieldKind::Green(*j), cfg)?;
            let h = grid.cell_widths(n).iter().cloned().fold(0.0, f64::max);
            let trace = trace_mass(&g, cfg.mollify_cells * h)?;
            let top = trace.mass.iter().cloned().fold(0.0, f64::max);
            let values = trace
                .raw
                .iter()
                .map(|&r| if r.is_nan() { f64::NAN } else if r > cfg.activity_threshold * top { 1.0 } else { 0.0 })
                .collect::<Vec<_>>();
            Ok(GridField { nan_cells: values.iter().filter(|v| v.is_nan()).count(), values, meta, grid: grid.clone(), resolution: n })
        }
    }
}

/// Nonnegative cell masses of a discrete current or measure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureField {
    pub grid: GridBox,
    pub resolution: usize,
    /// Signed masses; NaN outside the computable interior.
    pub raw: Vec<f64>,
    /// `max(raw, 0)`, zero outside the interior.
    pub mass: Vec<f64>,
    /// Total negative mass removed by clamping.
    pub clamped: f64,
    pub mollify_radius: Option<f64>,
    pub warnings: Vec<String>,
}

pub const CLAMP_LIMIT: f64 = 0.01;

impl MeasureField {
    fn from_raw(grid: GridBox, n: usize, raw: Vec<f64>, mollify_radius: Option<f64>) -> Self {
        let mass: Vec<f64> = raw.iter().map(|&r| if r > 0.0 { r } else { 0.0 }).collect();
        let clamped: f64 = raw.iter().filter(|r| **r < 0.0).map(|r| -r).sum();
        let mut m = MeasureField { grid, resolution: n, raw, mass, clamped, mollify_radius, warnings: Vec::new() };
        if mollify_radius.is_some() && m.clamp_fraction() > CLAMP_LIMIT {
            m.warnings.push(format!(
                "NotPlurisubharmonic: clamped mass is {:.3}% of the total",
                100.0 * m.clamp_fraction()
            ));
        }
        m
    }

    pub fn total(&self) -> f64 {
        pairwise_sum(&self.mass)
    }

    pub fn raw_total(&self) -> f64 {
        let v: Vec<f64> = self.raw.iter().cloned().filter(|r| r.is_finite()).collect();
        pairwise_sum(&v)
    }

    pub fn clamp_fraction(&self) -> f64 {
        let t = self.total();
        if t > 0.0 {
            self.clamped / t
        } else if self.clamped > 0.0 {
            f64::INFINITY
        } else {
            0.0
        }
    }

    /// A Monge–Ampère run is valid when clamping removed at most 1% of the mass.
    pub fn is_valid(&self) -> bool {
        self.clamp_fraction() <= CLAMP_LIMIT
    }

    pub fn max_abs_raw(&self) -> f64 {
        self.raw.iter().cloned().filter(|r| r.is_finite()).map(f64::abs).fold(0.0, f64::max)
    }

    /// Mass density per unit volume at a cell.
    pub fn density(&self, k: usize) -> f64 {
        self.raw[k] / self.grid.cell_volume(self.resolution)
    }
}

/// Deterministic tree sum.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 64 {
        return v.iter().sum();
    }
    let (a, b) = v.split_at(v.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

/// `dd^c u` on one complex parameter: `(h_x h_y / 2 pi)` times the 5-point
/// Laplacian at interior cells, so that `dd^c log|lambda - lambda_0|` has mass 1.
pub fn ddc(field: &GridField) -> Result<MeasureField> {
    if field.dim() != 1 {
        return Err(GridError::DimensionMismatch { expected: 1, got: field.dim() });
    }
    let n = field.resolution;
    let w = field.grid.cell_widths(n);
    let (hx, hy) = (w[0], w[1]);
    let u = &field.values;
    let area = hx * hy / (2.0 * std::f64::consts::PI);
    let mut raw = vec![f64::NAN; n * n];
    raw.par_chunks_mut(n).enumerate().for_each(|(iy, row)| {
        if iy == 0 || iy == n - 1 {
            return;
        }
        for ix in 1..n - 1 {
            let k = iy * n + ix;
            let c = u[k];
            let lap = (u[k + 1] - 2.0 * c + u[k - 1]) / (hx * hx) + (u[k + n] - 2.0 * c + u[k - n]) / (hy * hy);
            row[ix] = area * lap;
        }
    });
    Ok(MeasureField::from_raw(field.grid.clone(), n, raw, None))
}

/// Largest `|dd^c|` the stencil assigns to a generic harmonic field of the
/// same magnitude as `field`: the rounding floor of the discrete operator.
pub fn harmonic_noise_floor(field: &GridField) -> Result<f64> {
    let s = field.values.iter().cloned().filter(|v| v.is_finite()).map(f64::abs).fold(0.0, f64::max).max(1e-300);
    let c0 = field.grid.center[0] + C::new(0.1234567, -0.0765432);
    let r = field.grid.half_width[0].norm();
    let rot = C::from_polar(1.0, 0.7);
    let meta = FieldMeta { name: "harmonic_probe".into(), params: serde_json::json!({"scale": s}) };
    let probe = GridField::from_fn(field.grid.clone(), field.resolution, meta, |lam| {
        let z = (lam.0[0] - c0) / r;
        s * (rot * z * z).re / 4.0 + s * (rot.conj() * z).re / 4.0 + 0.5 * s
    })?;
    Ok(ddc(&probe)?.max_abs_raw())
}

fn gaussian_taps(radius: f64, h: f64) -> Vec<f64> {
    let k = (radius / h).ceil() as isize;
    let sigma = radius / 2.0;
    let w: Vec<f64> = (-k..=k).map(|t| (-(t as f64 * h).powi(2) / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

/// Separable truncated Gaussian (sigma = radius / 2, cut at +- radius per axis).
/// Cells whose kernel leaves the box become NaN.
pub fn mollify(field: &GridField, radius: f64) -> Result<GridField> {
    let n = field.resolution;
    let axes = field.grid.axes();
    let widths = field.grid.cell_widths(n);
    let hmax = widths.iter().cloned().fold(0.0, f64::max);
    if radius < 2.0 * hmax * (1.0 - 1e-12) {
        return Err(GridError::MollifyTooSmall { radius, h: hmax });
    }
    let st = strides(n, axes);
    let mut cur = field.values.clone();
    for a in 0..axes {
        let taps = gaussian_taps(radius, widths[a]);
        let k = (taps.len() / 2) as isize;
        let stride = st[a];
        let src = cur;
        let mut out = vec![f64::NAN; src.len()];
        out.par_chunks_mut(n).enumerate().for_each(|(row, chunk)| {
            let base = row * n;
            for (i0, o) in chunk.iter_mut().enumerate() {
                let cell = base + i0;
                let i = ((cell / stride) % n) as isize;
                if i < k || i + k >= n as isize {
                    continue;
                }
                let mut acc = 0.0;
                for (t, w) in taps.iter().enumerate() {
                    let off = t as isize - k;
                    acc += w * src[(cell as isize + off * stride as isize) as usize];
                }
                *o = acc;
            }
        });
        cur = out;
    }
    Ok(GridField {
        grid: field.grid.clone(),
        resolution: n,
        nan_cells: cur.iter().filter(|v| v.is_nan()).count(),
        values: cur,
        meta: FieldMeta {
            name: format!("{}_mollified", field.meta.name),
            params: serde_json::json!({"radius": radius, "source": field.meta}),
        },
    })
}

/// Complex Hessian `u_{j kbar}` at an interior 4-axis cell, or None near the edge.
fn complex_hessian2(u: &[f64], n: usize, k: usize, h: &[f64]) -> Option<[[C; 2]; 2]> {
    let st = strides(n, 4);
    let idx = unflatten(k, n, 4);
    if idx.iter().any(|&i| i == 0 || i == n - 1) {
        return None;
    }
    let at = |da: [isize; 4]| -> f64 {
        let mut kk = k as isize;
        for a in 0..4 {
            kk += da[a] * st[a] as isize;
        }
        u[kk as usize]
    };
    let mut e = [[0isize; 4]; 4];
    for (a, row) in e.iter_mut().enumerate() {
        row[a] = 1;
    }
    let add = |x: [isize; 4], y: [isize; 4], s: isize| -> [isize; 4] { [x[0] + s * y[0], x[1] + s * y[1], x[2] + s * y[2], x[3] + s * y[3]] };
    let zero = [0isize; 4];
    let c = at(zero);
    let d2 = |a: usize| (at(e[a]) - 2.0 * c + at(add(zero, e[a], -1))) / (h[a] * h[a]);
    let dm = |a: usize, b: usize| {
        (at(add(e[a], e[b], 1)) - at(add(e[a], e[b], -1)) - at(add(add(zero, e[a], -1), e[b], 1))
            + at(add(add(zero, e[a], -1), e[b], -1)))
            / (4.0 * h[a] * h[b])
    };
    let (xx1, yy1, xx2, yy2) = (d2(0), d2(1), d2(2), d2(3));
    let (x1x2, y1y2, x1y2, y1x2) = (dm(0, 2), dm(1, 3), dm(0, 3), dm(1, 2));
    let v = [c, xx1, yy1, xx2, yy2, x1x2, y1y2, x1y2, y1x2];
    if v.iter().any(|t| !t.is_finite()) {
        return None;
    }
    let h11 = C::new(0.25 * (xx1 + yy1), 0.0);
    let h22 = C::new(0.25 * (xx2 + yy2), 0.0);
    let h12 = C::new(0.25 * (x1x2 + y1y2), 0.25 * (x1y2 - y1x2));
    Some([[h11, h12], [h12.conj(), h22]])
}

/// Mixed density `(4/pi^2)(a11 b22 + a22 b11 - 2 Re(a12 conj b12))`.
fn mixed(a: &[[C; 2]; 2], b: &[[C; 2]; 2]) -> f64 {
    let pi2 = std::f64::consts::PI * std::f64::consts::PI;
    4.0 / pi2 * (a[0][0].re * b[1][1].re + a[1][1].re * b[0][0].re - 2.0 * (a[0][1] * b[0][1].conj()).re)
}

fn check_two(field: &GridField) -> Result<()> {
    if field.dim() != 2 {
        return Err(GridError::DimensionMismatch { expected: 2, got: field.dim() });
    }
    Ok(())
}

/// Cell masses of `dd^c a ^ dd^c b` for the mollified pair.
pub fn wedge_pair(a: &GridField, b: &GridField, mollify_radius: f64) -> Result<MeasureField> {
    check_two(a)?;
    check_two(b)?;
    let (ma, mb) = (mollify(a, mollify_radius)?, mollify(b, mollify_radius)?);
    Ok(wedge_of_mollified(&ma, &mb, mollify_radius))
}

/// `wedge_pair` on fields already passed through [`mollify`] with `radius`.
pub fn wedge_of_mollified(ma: &GridField, mb: &GridField, radius: f64) -> MeasureField {
    let n = ma.resolution;
    let h = ma.grid.cell_widths(n);
    let vol = ma.grid.cell_volume(n);
    let mut raw = vec![f64::NAN; ma.values.len()];
    let same = std::ptr::eq(ma, mb);
    raw.par_chunks_mut(n).enumerate().for_each(|(row, chunk)| {
        for (i, r) in chunk.iter_mut().enumerate() {
            let k = row * n + i;
            let Some(ha) = complex_hessian2(&ma.values, n, k, &h) else { continue };
            let hb = if same { ha } else {
                let Some(hb) = complex_hessian2(&mb.values, n, k, &h) else { continue };
                hb
            };
            *r = mixed(&ha, &hb) * vol;
        }
    });
    MeasureField::from_raw(ma.grid.clone(), n, raw, Some(radius))
}

/// `(dd^c u)^2` of the mollified field; identical to `wedge_pair(u, u)`.
pub fn monge_ampere2(field: &GridField, mollify_radius: f64) -> Result<MeasureField> {
    check_two(field)?;
    let m = mollify(field, mollify_radius)?;
    Ok(wedge_of_mollified(&m, &m, mollify_radius))
}

/// Trace of `dd^c` of the mollified field (the local mass of `dd^c u` against the
/// Euclidean Kähler form): `sum_j (h^2/2pi) Laplacian_j` per cell, any `m`.
pub fn trace_mass(field: &GridField, mollify_radius: f64) -> Result<MeasureField> {
    let m = mollify(field, mollify_radius)?;
    let n = m.resolution;
    let axes = m.grid.axes();
    let h = m.grid.cell_widths(n);
    let st = strides(n, axes);
    let vol = m.grid.cell_volume(n);
    let u = &m.values;
    let mut raw = vec![f64::NAN; u.len()];
    raw.par_chunks_mut(n).enumerate().for_each(|(row, chunk)| {
        for (i, r) in chunk.iter_mut().enumerate() {
            let k = row * n + i;
            let idx = unflatten(k, n, axes);
            if idx.iter().any(|&q| q == 0 || q == n - 1) {
                continue;
            }
            let mut lap = 0.0;
            for a in 0..axes {
                lap += (u[k + st[a]] - 2.0 * u[k] + u[k - st[a]]) / (h[a] * h[a]);
            }
            if lap.is_finite() {
                // a one-variable dd^c in each complex direction, weighted by the other directions' volume
                *r = lap / (2.0 * std::f64::consts::PI) * vol;
            }
        }
    });
    Ok(MeasureField::from_raw(m.grid.clone(), n, raw, Some(mollify_radius)))
}

/// Fraction of `measure` in cells whose 3x3 neighbourhood contains both cells
/// with `escape > threshold` and cells with `escape <= threshold`.
pub fn boundary_mass_fraction(measure: &MeasureField, escape: &GridField, threshold: f64) -> f64 {
    let n = measure.resolution;
    let mut inside = 0.0;
    for iy in 1..n - 1 {
        for ix in 1..n - 1 {
            let k = iy * n + ix;
            let m = measure.mass[k];
            if m == 0.0 {
                continue;
            }
            let (mut hi, mut lo) = (false, false);
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    let v = escape.values[(k as isize + dy * n as isize + dx) as usize];
                    if v > threshold {
                        hi = true;
                    } else if v.is_finite() {
                        lo = true;
                    }
                }
            }
            if hi && lo {
                inside += m;
            }
        }
    }
    inside / measure.total()
}

/// Flux `(1/2pi) \oint du/dn ds` through `|lambda - center| = r`: the total
/// `dd^c u` mass inside the circle.
pub fn circle_flux<F: Fn(C) -> f64 + Sync>(u: F, center: C, r: f64, samples: usize) -> f64 {
    let dr = 1e-4 * r;
    let s: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|k| {
            let e = C::from_polar(1.0, 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / samples as f64);
            (u(center + e * (r + dr)) - u(center + e * (r - dr))) / (2.0 * dr)
        })
        .collect();
    r * pairwise_sum(&s) / samples as f64
}

// ---------------------------------------------------------------------------
// ball masses and dimensions

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialMassProfile {
    pub center: C,
    pub radii: Vec<f64>,
    pub masses: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimensionEstimate {
    pub slope: f64,
    pub stderr: f64,
    pub fit_range: (f64, f64),
    pub n_points: usize,
}

const COVER_SUB: usize = 16;

/// `mu(B(center, r))` for each radius, weighting boundary cells by the area inside
/// (16 x 16 subsampling).
pub fn radial_masses(measure: &MeasureField, center: C, radii: &[f64]) -> Result<RadialMassProfile> {
    if measure.grid.dim() != 1 {
        return Err(GridError::DimensionMismatch { expected: 1, got: measure.grid.dim() });
    }
    let n = measure.resolution;
    let w = measure.grid.cell_widths(n);
    let h = w[0].max(w[1]);
    for &r in radii {
        if r < 3.0 * h {
            return Err(GridError::ResolutionExceeded { radius: r, h });
        }
        if !measure.grid.contains_disk(center, r) {
            return Err(GridError::BallOutsideBox { center, radius: r });
        }
    }
    let (x0, y0) = (measure.grid.coord(n, 0, 0) - 0.5 * w[0], measure.grid.coord(n, 1, 0) - 0.5 * w[1]);
    let masses = radii
        .par_iter()
        .map(|&r| {
            let ix0 = (((center.re - r - x0) / w[0]).floor().max(0.0)) as usize;
            let ix1 = (((center.re + r - x0) / w[0]).ceil() as usize).min(n);
            let iy0 = (((center.im - r - y0) / w[1]).floor().max(0.0)) as usize;
            let iy1 = (((center.im + r - y0) / w[1]).ceil() as usize).min(n);
            let mut rows = Vec::with_capacity(iy1 - iy0);
            for iy in iy0..iy1 {
                let mut acc = 0.0;
                for ix in ix0..ix1 {
                    let m = measure.mass[iy * n + ix];
                    if m == 0.0 {
                        continue;
                    }
                    let (cx, cy) = (x0 + ix as f64 * w[0], y0 + iy as f64 * w[1]);
                    // farthest and nearest corner distances decide full, empty or partial cover
                    let dx_far = (center.re - cx).abs().max((center.re - cx - w[0]).abs());
                    let dy_far = (center.im - cy).abs().max((center.im - cy - w[1]).abs());
                    let nx = (center.re.clamp(cx, cx + w[0])) - center.re;
                    let ny = (center.im.clamp(cy, cy + w[1])) - center.im;
                    if dx_far * dx_far + dy_far * dy_far <= r * r {
                        acc += m;
                    } else if nx * nx + ny * ny < r * r {
                        let mut hits = 0;
                        for a in 0..COVER_SUB {
                            for b in 0..COVER_SUB {
                                let px = cx + (a as f64 + 0.5) * w[0] / COVER_SUB as f64 - center.re;
                                let py = cy + (b as f64 + 0.5) * w[1] / COVER_SUB as f64 - center.im;
                                if px * px + py * py <= r * r {
                                    hits += 1;
                                }
                            }
                        }
                        acc += m * hits as f64 / (COVER_SUB * COVER_SUB) as f64;
                    }
                }
                rows.push(acc);
            }
            pairwise_sum(&rows)
        })
        .collect();
    Ok(RadialMassProfile { center, radii: radii.to_vec(), masses })
}

/// Ordinary least squares `y = a + b x`: `(b, stderr(b))`.
pub fn ols(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let stderr = if x.len() > 2 { (sse / (n - 2.0) / sxx).sqrt() } else { 0.0 };
    (slope, stderr)
}

/// Slope of `log mu(B(x, r))` against `log r`.
pub fn pointwise_dimension(profile: &RadialMassProfile) -> Result<DimensionEstimate> {
    let (lx, ly): (Vec<f64>, Vec<f64>) = profile
        .radii
        .iter()
        .zip(&profile.masses)
        .filter(|(_, m)| **m > 0.0)
        .map(|(r, m)| (r.ln(), m.ln()))
        .unzip();
    if lx.len() < 4 {
        return Err(GridError::DegenerateProfile { usable: lx.len() });
    }
    let (slope, stderr) = ols(&lx, &ly);
    let rmax = lx.iter().cloned().fold(f64::NEG_INFINITY, f64::max).exp();
    let rmin = lx.iter().cloned().fold(f64::INFINITY, f64::min).exp();
    Ok(DimensionEstimate { slope, stderr, fit_range: (rmax, rmin), n_points: lx.len() })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MassScaling {
    pub slope: f64,
    pub stderr: f64,
    /// `-q log d`.
    pub expected: f64,
    /// `|slope - expected| / |expected|`.
    pub relative_deviation: f64,
    pub ns: Vec<usize>,
    pub profile: RadialMassProfile,
    pub largest_usable_n: usize,
}

/// Regression of `log mu` against `n` over a profile whose `k`-th radius belongs to `ns[k]`.
pub fn scaling_slope(profile: &RadialMassProfile, ns: &[usize], q: usize, d: usize) -> MassScaling {
    let (x, y): (Vec<f64>, Vec<f64>) = ns
        .iter()
        .zip(&profile.masses)
        .filter(|(_, m)| **m > 0.0)
        .map(|(&n, &m)| (n as f64, m.ln()))
        .unzip();
    let (slope, stderr) = if x.len() >= 2 { ols(&x, &y) } else { (f64::NAN, f64::NAN) };
    let expected = -(q as f64) * (d as f64).ln();
    MassScaling {
        slope,
        stderr,
        expected,
        relative_deviation: ((slope - expected) / expected).abs(),
        ns: ns.to_vec(),
        profile: profile.clone(),
        largest_usable_n: ns.last().copied().unwrap_or(0),
    }
}

/// `log mu(B(center, eps / m_n^+))` against `n`, for `n = 0, 1, ..` while the
/// radius stays above three cell widths. `log_m_plus[k]` is `log m_{k+1}^+`.
pub fn mass_scaling(measure: &MeasureField, center: C, log_m_plus: &[f64], q: usize, d: usize, eps: f64) -> Result<MassScaling> {
    let n = measure.resolution;
    let w = measure.grid.cell_widths(n);
    let h = w[0].max(w[1]);
    let mut ns = vec![0usize];
    let mut radii = vec![eps];
    for (k, lm) in log_m_plus.iter().enumerate() {
        let r = eps * (-lm).exp();
        if r < 3.0 * h {
            break;
        }
        ns.push(k + 1);
        radii.push(r);
    }
    if radii.len() < 2 {
        return Err(GridError::ResolutionExceeded { radius: eps * (-log_m_plus.first().copied().unwrap_or(0.0)).exp(), h });
    }
    let profile = radial_masses(measure, center, &radii)?;
    Ok(scaling_slope(&profile, &ns, q, d))
}

/// Median nearest-neighbour distance over up to 512 sampled points.
fn point_spacing(points: &[C]) -> f64 {
    let step = (points.len() / 512).max(1);
    let mut d: Vec<f64> = points
        .par_iter()
        .step_by(step)
        .enumerate()
        .map(|(i, p)| {
            points
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i * step)
                .map(|(_, q)| (p - q).norm())
                .filter(|&x| x > 0.0)
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    d.sort_by(f64::total_cmp);
    d[d.len() / 2]
}

/// Box-counting slope of `log N(eps)` against `log(1/eps)`. With `scales`
/// empty, eight geometric scales between a quarter of the diameter and eight
/// point spacings are used.
pub fn box_dimension(points: &[C], scales: &[f64]) -> Result<DimensionEstimate> {
    if points.len() < 1000 {
        return Err(GridError::TooFewPoints(points.len()));
    }
    let spacing = point_spacing(points);
    let (lo, hi) = points.iter().fold((C::new(f64::INFINITY, f64::INFINITY), C::new(f64::NEG_INFINITY, f64::NEG_INFINITY)), |(lo, hi), p| {
        (C::new(lo.re.min(p.re), lo.im.min(p.im)), C::new(hi.re.max(p.re), hi.im.max(p.im)))
    });
    let diam = (hi - lo).norm();
    let scales: Vec<f64> = if scales.is_empty() {
        let (a, b) = (diam / 4.0, 8.0 * spacing);
        (0..8).map(|k| a * (b / a).powf(k as f64 / 7.0)).collect()
    } else {
        scales.to_vec()
    };
    let usable: Vec<f64> = scales.into_iter().filter(|&e| e >= 2.0 * spacing).collect();
    if usable.len() < 4 {
        return Err(GridError::InsufficientScales { usable: usable.len() });
    }
    let counts: Vec<f64> = usable
        .par_iter()
        .map(|&e| {
            let set: HashSet<(i64, i64)> = points
                .iter()
                .map(|p| (((p.re - lo.re) / e).floor() as i64, ((p.im - lo.im) / e).floor() as i64))
                .collect();
            set.len() as f64
        })
        .collect();
    let x: Vec<f64> = usable.iter().map(|e| (1.0 / e).ln()).collect();
    let y: Vec<f64> = counts.iter().map(|c| c.ln()).collect();
    let (slope, stderr) = ols(&x, &y);
    let emax = usable.iter().cloned().fold(0.0, f64::max);
    let emin = usable.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(DimensionEstimate { slope, stderr, fit_range: (emax, emin), n_points: points.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C {
        C::new(re, im)
    }

    fn field1(grid: GridBox, n: usize, f: impl Fn(C) -> f64 + Sync) -> GridField {
        let meta = FieldMeta { name: "test".into(), params: serde_json::Value::Null };
        GridField::from_fn(grid, n, meta, |l| f(l.0[0])).unwrap()
    }

    fn field2(half: f64, n: usize, f: impl Fn(C, C) -> f64 + Sync) -> GridField {
        let grid = GridBox::new(vec![c(0., 0.); 2], vec![c(half, half); 2]);
        let meta = FieldMeta { name: "test".into(), params: serde_json::Value::Null };
        GridField::from_fn(grid, n, meta, |l| f(l.0[0], l.0[1])).unwrap()
    }

    fn quad() -> MapFamily {
        MapFamily::unicritical(2).unwrap()
    }

    #[test]
    fn green_field_examples() {
        let grid = GridBox::square(c(0., 0.), 0.15);
        let g = scan_field(&quad(), &grid, 8, &FieldKind::Green(0), &ScanConfig::default()).unwrap();
        assert!(g.values.iter().all(|v| v.abs() < 1e-12));
        let far = GridBox::square(c(1e4, 0.), 1.0);
        let g = scan_field(&quad(), &far, 8, &FieldKind::Green(0), &ScanConfig::default()).unwrap();
        // G_c(0) = G_c(c)/2 and G_c(c) ~ log|c|
        for v in &g.values {
            assert!((v - 0.5 * 1e4f64.ln()).abs() < 0.01 * 0.5 * 1e4f64.ln());
        }
    }

    #[test]
    fn lyapunov_field_floor() {
        let grid = GridBox::rect(-2.5, 1.5, -2.0, 2.0);
        let l = scan_field(&quad(), &grid, 32, &FieldKind::Lyapunov, &ScanConfig::default()).unwrap();
        assert!(l.min() >= 2f64.ln() / 2.0);
        assert_eq!(l.nan_cells, 0);
    }

    #[test]
    fn ddc_harmonic_is_noise() {
        let grid = GridBox::square(c(0.3, -0.2), 1.0);
        let f = field1(grid, 64, |z| (z * z).re);
        let m = ddc(&f).unwrap();
        let floor = harmonic_noise_floor(&f).unwrap();
        assert!(m.max_abs_raw() <= 10.0 * floor.max(1e-18), "{} vs {floor}", m.max_abs_raw());
    }

    #[test]
    fn ddc_log_has_unit_mass() {
        // lambda_0 at a cell corner keeps every cell value finite
        let grid = GridBox::square(c(0., 0.), 4.0);
        let f = field1(grid, 256, |z| z.norm().ln());
        let m = ddc(&f).unwrap();
        assert!((m.raw_total() - 1.0).abs() < 0.01, "{}", m.raw_total());
    }

    #[test]
    fn ddc_square_norm_density() {
        let grid = GridBox::square(c(0.1, 0.), 1.0);
        let f = field1(grid, 32, |z| z.norm_sqr());
        let m = ddc(&f).unwrap();
        let h = 2.0 / 32.0;
        let want = 2.0 / std::f64::consts::PI * h * h;
        for r in m.raw.iter().filter(|r| r.is_finite()) {
            assert!((r - want).abs() < 1e-6);
        }
    }

    #[test]
    fn ddc_is_linear() {
        let grid = GridBox::square(c(0., 0.), 1.5);
        let u = field1(grid.clone(), 40, |z| (z - 0.3).norm().ln().max(-1.0));
        let v = field1(grid, 40, |z| z.norm_sqr() * z.re.cos());
        let (a, b) = (0.7, 2.5);
        let lhs = ddc(&u.combine(a, &v, b, "mix")).unwrap();
        let (mu, mv) = (ddc(&u).unwrap(), ddc(&v).unwrap());
        for k in 0..lhs.raw.len() {
            if lhs.raw[k].is_finite() {
                assert!((lhs.raw[k] - (a * mu.raw[k] + b * mv.raw[k])).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn monge_ampere_examples() {
        let n = 16;
        let r = 2.0 * 2.0 / n as f64;
        let pi2 = std::f64::consts::PI.powi(2);
        let u = field2(1.0, n, |a, b| a.norm_sqr() + b.norm_sqr());
        let m = monge_ampere2(&u, r).unwrap();
        let vol = u.grid.cell_volume(n);
        let finite: Vec<f64> = m.raw.iter().cloned().filter(|x| x.is_finite()).collect();
        assert!(!finite.is_empty());
        for x in &finite {
            assert!((x / vol - 8.0 / pi2).abs() < 1e-3);
        }
        let ph = field2(1.0, n, |a, b| (a * a).re + (b * b).re);
        assert!(monge_ampere2(&ph, r).unwrap().max_abs_raw() / vol < 1e-9);
        let rank1 = field2(1.0, n, |a, _| a.norm_sqr());
        assert!(monge_ampere2(&rank1, r).unwrap().max_abs_raw() / vol < 1e-9);
        let (a, b) = (field2(1.0, n, |a, _| a.norm_sqr()), field2(1.0, n, |_, b| b.norm_sqr()));
        let w = wedge_pair(&a, &b, r).unwrap();
        for x in w.raw.iter().filter(|x| x.is_finite()) {
            assert!((x / vol - 4.0 / pi2).abs() < 1e-3);
        }
    }

    #[test]
    fn wedge_self_matches_monge_ampere() {
        let n = 12;
        let u = field2(1.0, n, |a, b| (a * b.conj()).re.exp() + (a - b).norm().powf(1.5) + a.im * b.re);
        let r = 2.5 * 2.0 / n as f64;
        let w = wedge_pair(&u, &u, r).unwrap();
        let m = monge_ampere2(&u, r).unwrap();
        for (x, y) in w.raw.iter().zip(&m.raw) {
            assert!(x.is_nan() && y.is_nan() || (x - y).abs() <= 1e-10 * x.abs().max(1.0));
        }
    }

    #[test]
    fn mollify_requires_two_cells() {
        let u = field2(1.0, 8, |a, _| a.re);
        assert!(matches!(monge_ampere2(&u, 0.2), Err(GridError::MollifyTooSmall { .. })));
    }

    fn uniform(n: usize, half: f64) -> MeasureField {
        let grid = GridBox::square(c(0., 0.), half);
        let h = 2.0 * half / n as f64;
        MeasureField::from_raw(grid, n, vec![h * h; n * n], None)
    }

    #[test]
    fn radial_mass_examples() {
        let m = uniform(400, 1.0);
        let p = radial_masses(&m, c(0., 0.), &[0.5]).unwrap();
        assert!((p.masses[0] - std::f64::consts::PI / 4.0).abs() < 0.01 * std::f64::consts::PI / 4.0);
        // point mass
        let n = 101;
        let grid = GridBox::square(c(0., 0.), 1.0);
        let mut raw = vec![0.0; n * n];
        raw[50 * n + 50] = 1.0;
        let pm = MeasureField::from_raw(grid, n, raw, None);
        let p = radial_masses(&pm, c(0., 0.), &[0.8, 0.4, 0.2, 0.1]).unwrap();
        assert!(p.masses.iter().all(|&x| x == 1.0));
        assert!(matches!(radial_masses(&pm, c(0., 0.), &[0.01]), Err(GridError::ResolutionExceeded { .. })));
    }

    #[test]
    fn lebesgue_dimension_two() {
        let m = uniform(1024, 1.0);
        let radii: Vec<f64> = (0..6).map(|k| 0.8 * 0.5f64.powi(k)).collect();
        let p = radial_masses(&m, c(0.01, -0.02), &radii).unwrap();
        let d = pointwise_dimension(&p).unwrap();
        assert!((d.slope - 2.0).abs() < 0.02, "{d:?}");
    }

    #[test]
    fn cantor_dust_dimension() {
        // product middle-thirds dust, 4^-k mass per square of side 3^-k, k = 7
        let k = 7;
        let n = 3usize.pow(k);
        let grid = GridBox::new(vec![c(0.5, 0.5)], vec![c(0.5, 0.5)]);
        let in_cantor = |mut i: usize| {
            for _ in 0..k {
                if i % 3 == 1 {
                    return false;
                }
                i /= 3;
            }
            true
        };
        let w = 4f64.powi(-(k as i32));
        let mut raw = vec![0.0; n * n];
        for iy in (0..n).filter(|&i| in_cantor(i)) {
            for ix in (0..n).filter(|&i| in_cantor(i)) {
                raw[iy * n + ix] = w;
            }
        }
        let m = MeasureField::from_raw(grid, n, raw, None);
        // a dust point away from the edges: the corner point (1/3 - 1/3^k... ) use the Cantor point 1/4
        let x = 0.25;
        let radii: Vec<f64> = (1..5).map(|j| 3f64.powi(-j) * 0.2).collect();
        let p = radial_masses(&m, c(x, x), &radii).unwrap();
        let d = pointwise_dimension(&p).unwrap();
        assert!((d.slope - 4f64.ln() / 3f64.ln()).abs() < 0.05, "{d:?}");
    }

    #[test]
    fn synthetic_scaling_laws() {
        let ns: Vec<usize> = (0..6).collect();
        let prof = RadialMassProfile {
            center: c(0., 0.),
            radii: ns.iter().map(|&n| 4f64.powi(-(n as i32))).collect(),
            masses: ns.iter().map(|&n| 2f64.powi(-(n as i32))).collect(),
        };
        let s = scaling_slope(&prof, &ns, 1, 2);
        assert!((s.slope + 2f64.ln()).abs() < 1e-6);
        let leb = RadialMassProfile {
            masses: prof.radii.iter().map(|r| std::f64::consts::PI * r * r).collect(),
            ..prof
        };
        let s = scaling_slope(&leb, &ns, 1, 2);
        assert!((s.slope + 2.0 * 4f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn box_dimension_examples() {
        // middle-thirds Cantor set, depth 12, left endpoints
        let depth = 12;
        let pts: Vec<C> = (0..1usize << depth)
            .map(|w| {
                let x: f64 = (0..depth).map(|b| if (w >> b) & 1 == 1 { 2.0 * 3f64.powi(-(depth as i32 - b as i32)) } else { 0.0 }).sum();
                c(x, 0.)
            })
            .collect();
        let d = box_dimension(&pts, &[]).unwrap();
        assert!((d.slope - 2f64.ln() / 3f64.ln()).abs() < 0.05, "{d:?}");
        let circle: Vec<C> = (0..20000).map(|k| C::from_polar(1.0, k as f64 * std::f64::consts::TAU / 20000.0)).collect();
        let d = box_dimension(&circle, &[]).unwrap();
        assert!((d.slope - 1.0).abs() < 0.05, "{d:?}");
        assert!(matches!(box_dimension(&circle[..10], &[]), Err(GridError::TooFewPoints(10))));
        assert!(matches!(box_dimension(&circle, &[0.5, 0.25]), Err(GridError::InsufficientScales { .. })));
    }

    #[test]
    fn demarco_residual_small_grid() {
        let grid = GridBox::rect(-2.5, 1.5, -2.0, 2.0);
        let cfg = ScanConfig::default();
        let l = scan_field(&quad(), &grid, 64, &FieldKind::Lyapunov, &cfg).unwrap();
        let g = scan_field(&quad(), &grid, 64, &FieldKind::Green(0), &cfg).unwrap();
        let diff = ddc(&l.combine(1.0, &g, -1.0, "residual")).unwrap();
        let floor = harmonic_noise_floor(&l).unwrap();
        assert!(diff.max_abs_raw() <= 10.0 * floor, "{} {floor}", diff.max_abs_raw());
        let (ml, mg) = (ddc(&l).unwrap().total(), ddc(&g).unwrap().total());
        assert!((ml - mg).abs() <= 0.01 * mg);
    }

    #[test]
    fn monte_carlo_lyapunov_field_agrees_statistically() {
        let grid = GridBox::rect(-2.5, 1.5, -2.0, 2.0);
        let mut cfg = ScanConfig::default();
        let l = scan_field(&quad(), &grid, 8, &FieldKind::Lyapunov, &cfg).unwrap();
        cfg.lyapunov = LyapunovMode::MonteCarlo { n_points: 4000, depth: 40, seed: 3 };
        let mc = scan_field(&quad(), &grid, 8, &FieldKind::Lyapunov, &cfg).unwrap();
        let mean_diff: f64 = l.values.iter().zip(&mc.values).map(|(a, b)| a - b).sum::<f64>() / 64.0;
        let max_diff = l.values.iter().zip(&mc.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(mean_diff.abs() < 0.02, "{mean_diff}");
        assert!(max_diff < 0.1, "{max_diff}");
    }

    #[test]
    fn circle_flux_of_log() {
        let f = circle_flux(|z| (z - 0.3).norm().ln(), c(0., 0.), 2.0, 256);
        assert!((f - 1.0).abs() < 1e-6);
    }

    #[test]
    fn activity_flags_quadratic() {
        let grid = GridBox::rect(-2.5, 1.5, -2.0, 2.0);
        let a = scan_field(&quad(), &grid, 64, &FieldKind::Activity(0), &ScanConfig::default()).unwrap();
        let on = a.values.iter().filter(|v| **v == 1.0).count();
        assert!(on > 0 && on < 64 * 64 / 2, "{on}");
        // far from M nothing is active
        let k = 32 * 64 + 56;
        assert_eq!(a.values[k], 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn ddc_linear_random(a in 0.0f64..3.0, b in 0.0f64..3.0, s in -1.0f64..1.0) {
            let grid = GridBox::square(c(s, 0.), 1.0);
            let u = field1(grid.clone(), 16, |z| (z * z * z).re + z.norm_sqr());
            let v = field1(grid, 16, |z| (z - s).norm().ln().max(-3.0));
            let lhs = ddc(&u.combine(a, &v, b, "m")).unwrap();
            let (mu, mv) = (ddc(&u).unwrap(), ddc(&v).unwrap());
            for k in 0..lhs.raw.len() {
                if lhs.raw[k].is_finite() {
                    prop_assert!((lhs.raw[k] - (a * mu.raw[k] + b * mv.raw[k])).abs() <= 1e-12);
                }
            }
        }
    }
}

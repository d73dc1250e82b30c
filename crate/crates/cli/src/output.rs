//! Output directory with content hashes: PGM (P5, 16-bit big-endian), CSV,
//! JSON/NDJSON, per-file sidecars and `manifest.json`.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use biflab::bifgrid::{GridBox, GridField, MeasureField};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::CliError;

pub struct Outputs {
    dir: PathBuf,
    config: Value,
    hashes: BTreeMap<String, String>,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl Outputs {
    pub fn new(dir: PathBuf, config: Value) -> Result<Self, CliError> {
        fs::create_dir_all(&dir)?;
        Ok(Outputs { dir, config, hashes: BTreeMap::new() })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        fs::write(self.dir.join(name), bytes)?;
        self.hashes.insert(name.to_string(), hex(&Sha256::digest(bytes)));
        Ok(())
    }

    pub fn json(&mut self, name: &str, value: &Value) -> Result<(), CliError> {
        let mut s = serde_json::to_string_pretty(value).expect("json value serializes");
        s.push('\n');
        self.write(name, s.as_bytes())
    }

    /// `<name>.meta.json`: the resolved configuration plus `extra`.
    pub fn sidecar(&mut self, name: &str, extra: Value) -> Result<(), CliError> {
        let v = json!({ "file": name, "config": self.config, "info": extra });
        self.json(&format!("{name}.meta.json"), &v)
    }

    /// Linear 16-bit grey levels between the finite min and max; NaN maps to 0.
    pub fn pgm(&mut self, name: &str, width: usize, height: usize, rows: &[f64], extra: Value) -> Result<(), CliError> {
        let finite = || rows.iter().cloned().filter(|v| v.is_finite());
        let lo = finite().fold(f64::INFINITY, f64::min);
        let hi = finite().fold(f64::NEG_INFINITY, f64::max);
        let mut bytes = format!("P5\n{width} {height}\n65535\n").into_bytes();
        for &v in rows {
            let level = if !v.is_finite() || !(hi > lo) { 0 } else { ((v - lo) / (hi - lo) * 65535.0).round() as u16 };
            bytes.extend_from_slice(&level.to_be_bytes());
        }
        self.write(name, &bytes)?;
        let (lo, hi) = if lo <= hi { (lo, hi) } else { (0.0, 0.0) };
        self.sidecar(name, json!({ "min": lo, "max": hi, "gamma": 1.0, "detail": extra }))
    }

    pub fn csv(&mut self, name: &str, header: &[&str], rows: impl Iterator<Item = Vec<String>>, extra: Value) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).map_err(|e| CliError::Io(e.into()))?;
        for r in rows {
            w.write_record(&r).map_err(|e| CliError::Io(e.into()))?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Io(e.into_error()))?;
        self.write(name, &bytes)?;
        self.sidecar(name, extra)
    }

    pub fn finish(mut self, command: &str, argv: &[String]) -> Result<(), CliError> {
        let outputs: BTreeMap<String, String> = std::mem::take(&mut self.hashes);
        let manifest = json!({
            "command": command,
            "argv": argv,
            "config": self.config,
            "outputs": outputs,
        });
        let mut s = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        s.push('\n');
        fs::write(self.dir.join("manifest.json"), s)?;
        Ok(())
    }
}

/// Image rows (top row = largest imaginary part of the first coordinate).
/// Two-parameter fields are reduced to the first coordinate: measures by
/// summing over the second, scalar fields by the slice through its central cell.
pub fn image(grid: &GridBox, n: usize, values: &[f64], sum: bool) -> Vec<f64> {
    let plane = n * n;
    let mut flat = vec![0.0; plane];
    if grid.dim() == 1 {
        flat.copy_from_slice(values);
    } else if sum {
        for (k, v) in values.iter().enumerate() {
            if v.is_finite() {
                flat[k % plane] += v;
            }
        }
    } else {
        let slab = (n / 2) * n + n / 2;
        let stride = plane;
        let offset = slab * stride;
        flat.copy_from_slice(&values[offset..offset + plane]);
    }
    (0..n).rev().flat_map(|iy| flat[iy * n..(iy + 1) * n].to_vec()).collect()
}

fn header(m: usize, value: &'static str) -> Vec<&'static str> {
    if m == 1 {
        vec!["ix", "iy", "re", "im", value]
    } else {
        vec!["i1x", "i1y", "i2x", "i2y", "re1", "im1", "re2", "im2", value]
    }
}

fn cell_row(grid: &GridBox, n: usize, k: usize, v: f64) -> Vec<String> {
    let axes = grid.axes();
    let mut rest = k;
    let idx: Vec<usize> = (0..axes)
        .map(|_| {
            let i = rest % n;
            rest /= n;
            i
        })
        .collect();
    let coords: Vec<f64> = (0..axes).map(|a| grid.coord(n, a, idx[a])).collect();
    idx.iter().map(|i| i.to_string()).chain(coords.iter().map(|c| c.to_string())).chain([v.to_string()]).collect()
}

pub fn write_field(out: &mut Outputs, stem: &str, f: &GridField) -> Result<(), CliError> {
    let n = f.resolution;
    let info = json!({ "field": f.meta, "nan_cells": f.nan_cells });
    out.pgm(&format!("{stem}.pgm"), n, n, &image(&f.grid, n, &f.values, false), info.clone())?;
    let rows = f.values.iter().enumerate().map(|(k, &v)| cell_row(&f.grid, n, k, v));
    out.csv(&format!("{stem}.csv"), &header(f.dim(), "value"), rows, info)
}

/// The CSV lists only cells with positive mass.
pub fn write_measure(out: &mut Outputs, stem: &str, m: &MeasureField, info: Value) -> Result<(), CliError> {
    let n = m.resolution;
    out.pgm(&format!("{stem}.pgm"), n, n, &image(&m.grid, n, &m.mass, true), info.clone())?;
    let rows = m.mass.iter().enumerate().filter(|(_, v)| **v > 0.0).map(|(k, &v)| cell_row(&m.grid, n, k, v));
    out.csv(&format!("{stem}.csv"), &header(m.grid.dim(), "mass"), rows, info)
}

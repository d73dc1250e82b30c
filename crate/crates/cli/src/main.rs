//! `biflab`: batch front end. Exit codes: 0 success, 2 invalid input,
//! 3 numerical failure, 1 I/O failure.

mod grammar;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use biflab::bifgrid::{self, FieldKind, GridError, LyapunovMode, ScanConfig};
use biflab::family::FamilyError;
use biflab::hyperbolic::{self, HyperbolicError};
use biflab::misiurewicz::{self, MisiurewiczCertificate, MisiurewiczError};
use biflab::potential::{self, PotentialError};
use biflab::{MapFamily, Param};
use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64 as C;
use serde_json::{json, Value};

use output::Outputs;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

fn family_is_input(e: &FamilyError) -> bool {
    matches!(
        e,
        FamilyError::InvalidDegree(_) | FamilyError::ParamDimension { .. } | FamilyError::NonFinite | FamilyError::InvalidSpec(_)
    )
}

impl From<FamilyError> for CliError {
    fn from(e: FamilyError) -> Self {
        if family_is_input(&e) {
            CliError::Validation(e.to_string())
        } else {
            CliError::Numerical(e.to_string())
        }
    }
}

impl From<PotentialError> for CliError {
    fn from(e: PotentialError) -> Self {
        match e {
            PotentialError::Family(f) => f.into(),
            PotentialError::ZeroLift => CliError::Validation(e.to_string()),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

impl From<HyperbolicError> for CliError {
    fn from(e: HyperbolicError) -> Self {
        match e {
            HyperbolicError::Family(f) => f.into(),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

impl From<MisiurewiczError> for CliError {
    fn from(e: MisiurewiczError) -> Self {
        match e {
            MisiurewiczError::InvalidSpec(_) => CliError::Validation(e.to_string()),
            MisiurewiczError::Family(f) => f.into(),
            MisiurewiczError::Hyperbolic(h) => h.into(),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

impl From<GridError> for CliError {
    fn from(e: GridError) -> Self {
        match e {
            GridError::Family(f) => f.into(),
            GridError::Potential(p) => p.into(),
            GridError::ResolutionTooSmall(_)
            | GridError::DimensionMismatch { .. }
            | GridError::MollifyTooSmall { .. }
            | GridError::BallOutsideBox { .. }
            | GridError::TooFewPoints(_)
            | GridError::ResolutionExceeded { .. } => CliError::Validation(e.to_string()),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Parser)]
#[command(name = "biflab", version, about = "Bifurcation currents, Green functions and Misiurewicz parameters")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// `unicritical<d>`, `bh<d>`, inline JSON family document, or `@file.json`.
    #[arg(long)]
    family: Option<String>,
    /// Output directory.
    #[arg(long, default_value = "biflab-out")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum, serde::Serialize)]
#[serde(rename_all = "snake_case")]
enum LyapMethod {
    Green,
    Mc,
}

#[derive(Args, Clone)]
struct ScanOpts {
    /// `cx,cy:wxh[;cx,cy:wxh]`, half widths in parameter units.
    #[arg(long = "box", allow_hyphen_values = true)]
    grid: String,
    #[arg(long, default_value_t = 256)]
    res: usize,
    /// `L`, `G<j>` or `activity<j>`.
    #[arg(long, default_value = "L")]
    field: String,
    #[arg(long, value_enum, default_value_t = LyapMethod::Green)]
    lyap_method: LyapMethod,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = 40)]
    depth: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = potential::DEFAULT_GREEN_TOL)]
    green_tol: f64,
    /// Mollification radius in cell widths (activity flags, `ma2`).
    #[arg(long, default_value_t = 3.0)]
    mollify_cells: f64,
    #[arg(long, default_value_t = 1e-3)]
    activity_threshold: f64,
}

impl ScanOpts {
    fn config(&self) -> ScanConfig {
        ScanConfig {
            lyapunov: match self.lyap_method {
                LyapMethod::Green => LyapunovMode::GreenSum,
                LyapMethod::Mc => LyapunovMode::MonteCarlo { n_points: self.samples, depth: self.depth, seed: self.seed },
            },
            green_tol: self.green_tol,
            mollify_cells: self.mollify_cells,
            activity_threshold: self.activity_threshold,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Scan L, G_j or activity flags over a parameter box.
    Scan {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        scan: ScanOpts,
    },
    /// Discrete dd^c of a one-parameter field.
    Ddc {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        scan: ScanOpts,
    },
    /// Mollified Monge–Ampère mass over a two-parameter box.
    Ma2 {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        scan: ScanOpts,
        /// Mixed wedge of two fields instead, e.g. `G0,G1`.
        #[arg(long)]
        pair: Option<String>,
    },
    /// Lyapunov exponent at one parameter.
    Lyap {
        #[command(flatten)]
        common: Common,
        #[arg(long, allow_hyphen_values = true)]
        param: Option<String>,
        #[arg(long, value_enum, default_value_t = LyapMethod::Green)]
        method: LyapMethod,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 40)]
        depth: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Newton solve for Misiurewicz parameters; writes certificates.ndjson.
    Misiurewicz {
        #[command(flatten)]
        common: Common,
        /// `k0=2,n=1[,p=1][,index=j]`, one per tracked critical point.
        #[arg(long, required = true)]
        pattern: Vec<String>,
        /// Seed parameter(s), `re,im[;re,im]`.
        #[arg(long, allow_hyphen_values = true)]
        seed: Vec<String>,
        /// Seed on the cell centers of this box instead.
        #[arg(long, allow_hyphen_values = true)]
        seed_box: Option<String>,
        #[arg(long, default_value_t = 8)]
        seed_res: usize,
        #[arg(long, default_value_t = 1e-6)]
        min_sep: f64,
        #[arg(long, default_value_t = 0.0)]
        sigma_floor: f64,
    },
    /// Re-verify certificates from an NDJSON file.
    Certify {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "biflab-out")]
        out: PathBuf,
    },
    /// Pointwise dimension of a scanned dd^c measure, or box dimension of a point cloud.
    Dimension {
        #[command(flatten)]
        common: Common,
        #[arg(long = "box", allow_hyphen_values = true)]
        grid: Option<String>,
        #[arg(long, default_value_t = 1024)]
        res: usize,
        #[arg(long, default_value = "L")]
        field: String,
        #[arg(long, allow_hyphen_values = true)]
        center: Option<String>,
        /// Comma-separated radii; default 8 halvings from a quarter of the box.
        #[arg(long, allow_hyphen_values = true)]
        radii: Option<String>,
        /// CSV with `re,im` columns: box-counting mode.
        #[arg(long)]
        points: Option<PathBuf>,
        #[arg(long, allow_hyphen_values = true)]
        scales: Option<String>,
    },
    /// Mass scaling `log mu(B(x, eps / m_n^+))` against n at a certified parameter.
    Scaling {
        #[command(flatten)]
        common: Common,
        #[arg(long = "box", allow_hyphen_values = true)]
        grid: String,
        #[arg(long, default_value_t = 1024)]
        res: usize,
        #[arg(long, default_value = "L")]
        field: String,
        /// NDJSON certificate (first line used) giving the center and m_n^+.
        #[arg(long)]
        certificate: PathBuf,
        #[arg(long, default_value_t = 0.0625)]
        eps: f64,
    },
    /// Cantor hyperbolic set from inverse branches at anchor points.
    Cantor {
        #[command(flatten)]
        common: Common,
        #[arg(long, allow_hyphen_values = true)]
        param: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        anchors: String,
        #[arg(long, default_value_t = 10)]
        depth: usize,
    },
    /// Chain linearization along the periodic orbit of a repelling point.
    Linearize {
        #[command(flatten)]
        common: Common,
        #[arg(long, allow_hyphen_values = true)]
        param: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        point: String,
        #[arg(long, default_value_t = 30)]
        n: usize,
        #[arg(long, default_value_t = hyperbolic::DEFAULT_TRUNC)]
        trunc: usize,
    },
}

fn load_family(common: &Common) -> Result<(MapFamily, Option<Param>)> {
    let s = common.family.as_deref().ok_or_else(|| CliError::Validation("--family is required".into()))?;
    grammar::family(s)
}

fn resolve_param(given: Option<&str>, default: Option<Param>) -> Result<Param> {
    match given {
        Some(s) => grammar::param(s),
        None => default.ok_or_else(|| CliError::Validation("--param is required".into())),
    }
}

fn field_slug(f: &FieldKind) -> String {
    match f {
        FieldKind::Lyapunov => "L".into(),
        FieldKind::Green(j) => format!("G{j}"),
        FieldKind::Activity(j) => format!("activity{j}"),
    }
}

fn print(v: &Value) {
    println!("{}", serde_json::to_string(v).expect("json serializes"));
}

fn measure_summary(m: &bifgrid::MeasureField) -> Value {
    let mut v = json!({
        "total": m.total(),
        "raw_total": m.raw_total(),
        "clamped": m.clamped,
        "clamp_fraction": m.clamp_fraction(),
        "mollify_radius": m.mollify_radius,
        "warnings": m.warnings,
    });
    if m.mollify_radius.is_some() {
        v["valid"] = json!(m.is_valid());
    }
    v
}

fn scan_setup(common: &Common, scan: &ScanOpts) -> Result<(MapFamily, bifgrid::GridBox, FieldKind, Value)> {
    let (family, _) = load_family(common)?;
    let grid = grammar::grid_box(&scan.grid)?;
    let which = grammar::field(&scan.field)?;
    let config = json!({
        "family": biflab::family::FamilyDoc::from_family(&family, None),
        "box": grid,
        "resolution": scan.res,
        "field": field_slug(&which),
        "scan": scan.config(),
    });
    Ok((family, grid, which, config))
}

fn run(cli: Cli, argv: &[String]) -> Result<()> {
    match cli.command {
        Command::Scan { common, scan } => {
            let (family, grid, which, config) = scan_setup(&common, &scan)?;
            let f = bifgrid::scan_field(&family, &grid, scan.res, &which, &scan.config())?;
            let mut out = Outputs::new(common.out, config)?;
            let stem = format!("scan_{}", field_slug(&which));
            output::write_field(&mut out, &stem, &f)?;
            let summary = json!({ "min": f.min(), "max": f.max(), "nan_cells": f.nan_cells });
            out.json(&format!("{stem}.json"), &summary)?;
            out.finish("scan", argv)?;
            print(&summary);
        }
        Command::Ddc { common, scan } => {
            let (family, grid, which, config) = scan_setup(&common, &scan)?;
            let f = bifgrid::scan_field(&family, &grid, scan.res, &which, &scan.config())?;
            let m = bifgrid::ddc(&f)?;
            let mut out = Outputs::new(common.out, config)?;
            let stem = format!("ddc_{}", field_slug(&which));
            let mut summary = measure_summary(&m);
            summary["nan_cells"] = json!(f.nan_cells);
            output::write_measure(&mut out, &stem, &m, summary.clone())?;
            out.json(&format!("{stem}.json"), &summary)?;
            out.finish("ddc", argv)?;
            print(&summary);
        }
        Command::Ma2 { common, scan, pair } => {
            let (family, grid, which, mut config) = scan_setup(&common, &scan)?;
            let h = grid.cell_widths(scan.res).iter().cloned().fold(0.0, f64::max);
            let radius = scan.mollify_cells * h;
            let cfg = scan.config();
            let (m, stem) = match &pair {
                Some(p) => {
                    let (a, b) = p.split_once(',').ok_or_else(|| CliError::Validation(format!("--pair {p:?}")))?;
                    let (fa, fb) = (grammar::field(a)?, grammar::field(b)?);
                    config["pair"] = json!([field_slug(&fa), field_slug(&fb)]);
                    let ua = bifgrid::scan_field(&family, &grid, scan.res, &fa, &cfg)?;
                    let ub = bifgrid::scan_field(&family, &grid, scan.res, &fb, &cfg)?;
                    (bifgrid::wedge_pair(&ua, &ub, radius)?, format!("ma2_{}_{}", field_slug(&fa), field_slug(&fb)))
                }
                None => {
                    let u = bifgrid::scan_field(&family, &grid, scan.res, &which, &cfg)?;
                    (bifgrid::monge_ampere2(&u, radius)?, format!("ma2_{}", field_slug(&which)))
                }
            };
            config["mollify_radius"] = json!(radius);
            let mut out = Outputs::new(common.out, config)?;
            let summary = measure_summary(&m);
            output::write_measure(&mut out, &stem, &m, summary.clone())?;
            out.json(&format!("{stem}.json"), &summary)?;
            out.finish("ma2", argv)?;
            print(&summary);
            if !m.is_valid() {
                eprintln!("warning: {}", m.warnings.join("; "));
            }
        }
        Command::Lyap { common, param, method, samples, depth, seed } => {
            let (family, default) = load_family(&common)?;
            let lambda = resolve_param(param.as_deref(), default)?;
            let config = json!({
                "family": biflab::family::FamilyDoc::from_family(&family, Some(&lambda)),
                "method": method,
                "samples": samples,
                "depth": depth,
                "seed": seed,
                "green_tol": potential::DEFAULT_GREEN_TOL,
            });
            let v = match method {
                LyapMethod::Green => {
                    let value = potential::lyapunov_from_green(&family.at(&lambda)?, potential::DEFAULT_GREEN_TOL)?;
                    json!({ "value": value, "method": "green" })
                }
                LyapMethod::Mc => {
                    let e = potential::lyapunov_mc(&family, &lambda, samples, depth, seed)?;
                    json!({ "value": e.value, "stderr": e.stderr, "n_points": e.n_points, "rejected": e.rejected, "method": "mc" })
                }
            };
            let mut out = Outputs::new(common.out, config)?;
            out.json("lyap.json", &v)?;
            out.sidecar("lyap.json", json!({}))?;
            out.finish("lyap", argv)?;
            print(&v);
        }
        Command::Misiurewicz { common, pattern, seed, seed_box, seed_res, min_sep, sigma_floor } => {
            let (family, default) = load_family(&common)?;
            let spec = grammar::patterns(&pattern)?;
            spec.validate(&family)?;
            let mut seeds: Vec<Param> = seed.iter().map(|s| grammar::param(s)).collect::<Result<_>>()?;
            if let Some(b) = &seed_box {
                let g = grammar::grid_box(b)?;
                let axes = g.axes();
                let total = seed_res.pow(axes as u32);
                for k in 0..total {
                    let idx: Vec<usize> = (0..axes).map(|a| (k / seed_res.pow(a as u32)) % seed_res).collect();
                    seeds.push(g.cell_center(seed_res, &idx));
                }
            }
            if seeds.is_empty() {
                seeds.extend(default);
            }
            if seeds.is_empty() {
                return Err(CliError::Validation("give --seed or --seed-box".into()));
            }
            let k = spec.k();
            let free = spec.free_coords();
            for s in &seeds {
                if s.dim() != family.param_dim() {
                    return Err(FamilyError::ParamDimension { expected: family.param_dim(), got: s.dim() }.into());
                }
            }
            let config = json!({
                "family": biflab::family::FamilyDoc::from_family(&family, None),
                "pattern": spec,
                "free": free,
                "k": k,
                "seeds": seeds,
                "min_sep": min_sep,
                "sigma_floor": sigma_floor,
                "fd_step": misiurewicz::FD_STEP,
                "delta_rep": misiurewicz::DELTA_REP,
            });
            let certs: Vec<MisiurewiczCertificate> = if seeds.len() == 1 {
                vec![misiurewicz::solve_misiurewicz(&family, &seeds[0], &spec)?]
            } else {
                misiurewicz::batch_solve(&family, &seeds, &spec, min_sep, sigma_floor)
            };
            let lines: Vec<String> = certs.iter().map(|c| c.to_ndjson(&family)).collect();
            let mut out = Outputs::new(common.out, config)?;
            let mut body = lines.join("\n");
            if !body.is_empty() {
                body.push('\n');
            }
            out.write("certificates.ndjson", body.as_bytes())?;
            out.sidecar("certificates.ndjson", json!({ "count": certs.len(), "verified": certs.iter().filter(|c| c.verified).count() }))?;
            out.finish("misiurewicz", argv)?;
            print!("{body}");
            if certs.is_empty() {
                return Err(CliError::Numerical("no certificate found".into()));
            }
            if let Some(c) = certs.iter().find(|c| !c.verified) {
                return Err(CliError::Numerical(format!("certificate at {:?} failed verification", c.lambda.0)));
            }
        }
        Command::Certify { input, out } => {
            let text = std::fs::read_to_string(&input).map_err(|e| CliError::Validation(format!("{}: {e}", input.display())))?;
            let mut reports = Vec::new();
            let mut all = true;
            for line in text.lines().filter(|l| !l.trim().is_empty()) {
                let (cert, family) = MisiurewiczCertificate::from_ndjson(line)?;
                let r = misiurewicz::verify_certificate(&cert, &family, &cert.pattern);
                all &= r.passed;
                reports.push(json!({ "lambda": cert.lambda, "report": r }));
            }
            if reports.is_empty() {
                return Err(CliError::Validation("no certificates in input".into()));
            }
            let config = json!({ "input": input, "verify_fd_step": "central differences, fixed" });
            let mut o = Outputs::new(out, config)?;
            let body: String = reports.iter().map(|r| serde_json::to_string(r).expect("json") + "\n").collect();
            o.write("verify.ndjson", body.as_bytes())?;
            o.sidecar("verify.ndjson", json!({ "passed": all }))?;
            o.finish("certify", argv)?;
            print!("{body}");
            if !all {
                return Err(CliError::Numerical("certificate verification failed".into()));
            }
        }
        Command::Dimension { common, grid, res, field, center, radii, points, scales } => {
            if let Some(path) = points {
                let pts = read_points(&path)?;
                let sc = scales.as_deref().map(grammar::list).transpose()?.unwrap_or_default();
                let config = json!({ "mode": "box", "points": path, "scales": sc });
                let d = bifgrid::box_dimension(&pts, &sc)?;
                let v = serde_json::to_value(&d).expect("json");
                let mut out = Outputs::new(common.out, config)?;
                out.json("dimension.json", &v)?;
                out.sidecar("dimension.json", json!({}))?;
                out.finish("dimension", argv)?;
                print(&v);
                return Ok(());
            }
            let (family, _) = load_family(&common)?;
            let g = grammar::grid_box(grid.as_deref().ok_or_else(|| CliError::Validation("--box or --points is required".into()))?)?;
            let which = grammar::field(&field)?;
            let x = match &center {
                Some(c) => grammar::complex(c)?,
                None => g.center[0],
            };
            let radii = match &radii {
                Some(r) => grammar::list(r)?,
                None => {
                    let top = 0.25 * g.half_width[0].re.min(g.half_width[0].im);
                    (0..8).map(|k| top * 0.5f64.powi(k)).collect()
                }
            };
            let cfg = ScanConfig::default();
            let config = json!({
                "mode": "pointwise",
                "family": biflab::family::FamilyDoc::from_family(&family, None),
                "box": g, "resolution": res, "field": field_slug(&which), "center": [x.re, x.im], "radii": radii, "scan": cfg,
            });
            let f = bifgrid::scan_field(&family, &g, res, &which, &cfg)?;
            let m = bifgrid::ddc(&f)?;
            let prof = bifgrid::radial_masses(&m, x, &radii)?;
            let d = bifgrid::pointwise_dimension(&prof)?;
            let v = json!({ "estimate": d, "profile": prof, "measure": measure_summary(&m) });
            let mut out = Outputs::new(common.out, config)?;
            out.json("dimension.json", &v)?;
            out.sidecar("dimension.json", json!({}))?;
            out.finish("dimension", argv)?;
            print(&v);
        }
        Command::Scaling { common, grid, res, field, certificate, eps } => {
            let (family, _) = load_family(&common)?;
            let text = std::fs::read_to_string(&certificate)
                .map_err(|e| CliError::Validation(format!("{}: {e}", certificate.display())))?;
            let line = text.lines().find(|l| !l.trim().is_empty()).ok_or_else(|| CliError::Validation("empty certificate file".into()))?;
            let (cert, _) = MisiurewiczCertificate::from_ndjson(line)?;
            let g = grammar::grid_box(&grid)?;
            let which = grammar::field(&field)?;
            let x = cert.lambda.0[0];
            let cfg = ScanConfig::default();
            let q = cert.pattern.k();
            let config = json!({
                "family": biflab::family::FamilyDoc::from_family(&family, None),
                "box": g, "resolution": res, "field": field_slug(&which), "eps": eps, "certificate": certificate, "q": q, "scan": cfg,
            });
            let f = bifgrid::scan_field(&family, &g, res, &which, &cfg)?;
            let m = bifgrid::ddc(&f)?;
            let s = bifgrid::mass_scaling(&m, x, &cert.m_plus, q, family.degree, eps)?;
            let v = json!({ "scaling": s, "measure": measure_summary(&m) });
            let mut out = Outputs::new(common.out, config)?;
            out.json("scaling.json", &v)?;
            out.sidecar("scaling.json", json!({}))?;
            out.finish("scaling", argv)?;
            print(&v);
        }
        Command::Cantor { common, param, anchors, depth } => {
            let (family, default) = load_family(&common)?;
            let lambda = resolve_param(param.as_deref(), default)?;
            let anchors = grammar::points(&anchors)?;
            let sys = hyperbolic::build_cantor(&family, &lambda, &anchors, depth)?;
            let config = json!({
                "family": biflab::family::FamilyDoc::from_family(&family, Some(&lambda)),
                "anchors": anchors, "depth": depth,
            });
            let mut buf = Vec::new();
            sys.write_csv(&mut buf)?;
            let dim = bifgrid::box_dimension(&sys.cloud, &[]).ok();
            let v = json!({
                "points": sys.cloud.len(),
                "expansion": sys.expansion,
                "disks": sys.disks,
                "box_dimension": dim,
            });
            let mut out = Outputs::new(common.out, config)?;
            out.write("cantor.csv", &buf)?;
            out.sidecar("cantor.csv", v.clone())?;
            out.json("cantor.json", &v)?;
            out.finish("cantor", argv)?;
            print(&v);
        }
        Command::Linearize { common, param, point, n, trunc } => {
            let (family, default) = load_family(&common)?;
            let lambda = resolve_param(param.as_deref(), default)?;
            let w = grammar::complex(&point)?;
            let lin = hyperbolic::linearize_orbit(&family, &lambda, w, n, trunc)?;
            let coeffs = |s: &biflab::series::Series| s.coeffs.iter().map(|c| [c.re, c.im]).collect::<Vec<_>>();
            let v = json!({
                "rho": lin.rho, "rho_n": lin.rho_n, "n": lin.n,
                "multiplier": [lin.multiplier.re, lin.multiplier.im],
                "c_quad": lin.c_quad, "residual": lin.residual, "retries": lin.retries,
                "min_expansion": lin.min_expansion,
                "psi0": coeffs(&lin.psi0), "psi1": coeffs(&lin.psi1),
            });
            let config = json!({
                "family": biflab::family::FamilyDoc::from_family(&family, Some(&lambda)),
                "point": [w.re, w.im], "n": n, "trunc": trunc, "past": hyperbolic::DEFAULT_PAST,
            });
            let mut out = Outputs::new(common.out, config)?;
            out.json("linearize.json", &v)?;
            out.sidecar("linearize.json", json!({}))?;
            out.finish("linearize", argv)?;
            print(&v);
        }
    }
    Ok(())
}

fn read_points(path: &PathBuf) -> Result<Vec<C>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    let headers = r.headers().map_err(|e| CliError::Validation(e.to_string()))?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| CliError::Validation(format!("points file lacks a {name:?} column")))
    };
    let (ire, iim) = (col("re")?, col("im")?);
    let mut pts = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| CliError::Validation(e.to_string()))?;
        let num = |i: usize| rec[i].parse::<f64>().map_err(|_| CliError::Validation(format!("bad number {:?}", &rec[i])));
        pts.push(C::new(num(ire)?, num(iim)?));
    }
    Ok(pts)
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("BIFLAB_THREADS") {
        let n: usize = v.parse().map_err(|_| CliError::Validation(format!("BIFLAB_THREADS={v:?}")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Validation(e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = configure_threads().and_then(|_| run(cli, &argv[1..]));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("biflab: {e}");
            ExitCode::from(e.code())
        }
    }
}

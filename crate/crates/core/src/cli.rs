//! Command-line front end. [`run`] parses arguments, executes one command and
//! returns the process exit code.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::certificate::{certify, CertificateResult, CertifyConfig, SupportPattern};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::matio::{self, Rect, SailboatSpec};
use crate::pipeline::{self, ExtractionConfig, Extracted, Feature, LCurvePoint, SolverSettings};
use crate::problem::{PairedVariable, ProblemSpec};
use crate::solver::{Algorithm, SolveReport, StopReason};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_ITERATION_CAP: i32 = 2;
pub const EXIT_NO_FEATURES: i32 = 3;
pub const EXIT_NOT_CERTIFIED: i32 = 4;

pub const REPORT_SCHEMA: u32 = 1;

#[derive(Debug, Parser)]
#[command(name = "laros", version, about = "Large approximately rank-one submatrix extraction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve one convex relaxation for a fixed theta.
    Solve(SolveArgs),
    /// Extract features one after another with an L-curve theta choice.
    Extract(ExtractArgs),
    /// Test whether a given X2 is provably close to a rank-one optimum.
    Certify(CertifyArgs),
    /// Write the synthetic sailboat fixture.
    GenSailboat(GenArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
enum AlgoArg {
    Primal,
    Dual,
}

impl From<AlgoArg> for Algorithm {
    fn from(a: AlgoArg) -> Self {
        match a {
            AlgoArg::Primal => Algorithm::Primal,
            AlgoArg::Dual => Algorithm::Dual,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Switch {
    On,
    Off,
}

/// `auto` or a positive number.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(try_from = "Lambda0Repr")]
enum Lambda0 {
    Auto,
    Value(f64),
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Lambda0Repr {
    Num(f64),
    Text(String),
}

impl TryFrom<Lambda0Repr> for Lambda0 {
    type Error = String;
    fn try_from(r: Lambda0Repr) -> std::result::Result<Self, String> {
        match r {
            Lambda0Repr::Num(x) => Lambda0::from_str(&x.to_string()),
            Lambda0Repr::Text(s) => Lambda0::from_str(&s),
        }
    }
}

impl FromStr for Lambda0 {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Lambda0::Auto);
        }
        match s.parse::<f64>() {
            Ok(x) if x > 0.0 && x.is_finite() => Ok(Lambda0::Value(x)),
            _ => Err(format!("expected `auto` or a positive number, got `{s}`")),
        }
    }
}

/// Flags shared by `solve` and `extract`. Every field is optional so that a
/// `--config` file can fill in what the command line leaves out.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default)]
struct SolverOpts {
    /// Solver [default: dual]
    #[arg(long = "algo", value_enum)]
    algo: Option<AlgoArg>,
    /// Outer stopping tolerance [default: 1e-6]
    #[arg(long)]
    eps: Option<f64>,
    /// Outer iteration cap [default: 1000]
    #[arg(long = "max-outer")]
    max_outer: Option<usize>,
    /// Inner iteration cap [default: 30 for dual; the primal solver keeps its own]
    #[arg(long = "max-inner")]
    max_inner: Option<usize>,
    /// Initial penalty: `auto` (1/theta) or a number [default: auto]
    #[arg(long)]
    lambda0: Option<Lambda0>,
    /// Periodic optimality certification [default: on]
    #[arg(long, value_enum)]
    certify: Option<Switch>,
    /// Certification cadence in outer iterations [default: 10]
    #[arg(long = "certify-every")]
    certify_every: Option<usize>,
    /// Newton tolerance of the certificate [default: 1e-10]
    #[arg(long = "eps-s")]
    eps_s: Option<f64>,
}

impl SolverOpts {
    fn overlay(self, base: Self) -> Self {
        Self {
            algo: self.algo.or(base.algo),
            eps: self.eps.or(base.eps),
            max_outer: self.max_outer.or(base.max_outer),
            max_inner: self.max_inner.or(base.max_inner),
            lambda0: self.lambda0.or(base.lambda0),
            certify: self.certify.or(base.certify),
            certify_every: self.certify_every.or(base.certify_every),
            eps_s: self.eps_s.or(base.eps_s),
        }
    }

    fn settings(&self) -> Result<SolverSettings> {
        let d = SolverSettings::default();
        let algorithm: Algorithm = self.algo.map(Into::into).unwrap_or(d.algorithm);
        let max_inner = match (self.max_inner, algorithm) {
            (Some(m), _) => Some(m),
            (None, Algorithm::Dual) => Some(30),
            (None, Algorithm::Primal) => None,
        };
        let s = SolverSettings {
            algorithm,
            eps: self.eps.unwrap_or(d.eps),
            max_outer: self.max_outer.unwrap_or(d.max_outer),
            max_inner,
            lambda0: match self.lambda0 {
                Some(Lambda0::Value(x)) => Some(x),
                _ => None,
            },
            certify: self.certify.map(|c| c == Switch::On).unwrap_or(d.certify),
            cert_cadence: self.certify_every.unwrap_or(d.cert_cadence),
            eps_s: self.eps_s.unwrap_or(d.eps_s),
        };
        if !(s.eps > 0.0) || !(s.eps_s > 0.0) {
            return Err(Error::InvalidConfig("tolerances must be positive".into()));
        }
        if s.max_outer == 0 || s.cert_cadence == 0 || s.max_inner == Some(0) {
            return Err(Error::InvalidConfig("iteration counts and cadence must be at least 1".into()));
        }
        Ok(s)
    }
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default)]
struct SolveArgs {
    /// Matrix CSV
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    theta: Option<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    solver: SolverOpts,
    /// Report path; standard output when omitted
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON file with defaults for any of the flags above
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default)]
struct ExtractArgs {
    /// Matrix CSV, one image per column
    #[arg(long, conflicts_with = "images")]
    input: Option<PathBuf>,
    /// Directory of PGM images of equal size
    #[arg(long)]
    images: Option<PathBuf>,
    /// Image height for masks when the input is a CSV
    #[arg(long)]
    height: Option<usize>,
    /// Image width for masks when the input is a CSV
    #[arg(long)]
    width: Option<usize>,
    /// Ranges `a:b:n` separated by commas; a bare number adds one value
    #[arg(long = "theta-grid")]
    theta_grid: Option<String>,
    /// [default: 10]
    #[arg(long = "max-features")]
    max_features: Option<usize>,
    /// Extract dark features from `scale - A`
    #[arg(long)]
    #[serde(default)]
    negative: bool,
    /// [default: 255]
    #[arg(long = "negative-scale")]
    negative_scale: Option<f64>,
    /// Worker threads for the theta sweep [default: 1]
    #[arg(long)]
    jobs: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    solver: SolverOpts,
    /// Output directory for report.json and masks
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct CertifyArgs {
    /// Matrix CSV
    #[arg(long)]
    input: Option<PathBuf>,
    /// Candidate X2 CSV of the same shape
    #[arg(long)]
    x2: Option<PathBuf>,
    #[arg(long)]
    theta: Option<f64>,
    /// [default: 1e-10]
    #[arg(long = "eps-s")]
    eps_s: Option<f64>,
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct GenArgs {
    /// [default: 80]
    #[arg(long)]
    height: Option<usize>,
    /// [default: 50]
    #[arg(long)]
    width: Option<usize>,
    /// [default: 30]
    #[arg(long)]
    images: Option<usize>,
    /// Number of parts, at most 5 [default: 5]
    #[arg(long)]
    features: Option<usize>,
    /// [default: 3]
    #[arg(long = "per-image")]
    per_image: Option<usize>,
    /// [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
}

fn required<T>(v: Option<T>, flag: &str) -> Result<T> {
    v.ok_or_else(|| Error::InvalidConfig(format!("missing required option --{flag}")))
}

/// Parses `a:b:n[,c:d:m...]`.
pub fn parse_theta_grid(s: &str) -> Result<Vec<f64>> {
    let bad = || Error::InvalidConfig(format!("bad theta grid `{s}`"));
    let mut g = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let fields: Vec<&str> = part.split(':').collect();
        match fields.as_slice() {
            [x] => g.push(x.parse::<f64>().map_err(|_| bad())?),
            [a, b, n] => {
                let a: f64 = a.parse().map_err(|_| bad())?;
                let b: f64 = b.parse().map_err(|_| bad())?;
                let n: usize = n.parse().map_err(|_| bad())?;
                if n == 0 || !(a <= b) {
                    return Err(bad());
                }
                g.extend(pipeline::linspace(a, b, n));
            }
            _ => return Err(bad()),
        }
    }
    if g.is_empty() || g.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
        return Err(bad());
    }
    Ok(pipeline::normalize_grid(g))
}

#[derive(Debug, Clone, Serialize)]
pub struct SolverStats {
    pub algorithm: Algorithm,
    pub outer_iters: usize,
    pub inner_iters_total: usize,
    pub wall_seconds: f64,
    pub certify_seconds: f64,
    pub certified: bool,
    pub stop_reason: StopReason,
    /// `(outer, inner, total, certification)` as printed in run logs.
    pub tuple: String,
}

impl From<&SolveReport> for SolverStats {
    fn from(r: &SolveReport) -> Self {
        Self {
            algorithm: r.algorithm,
            outer_iters: r.outer_iters,
            inner_iters_total: r.inner_iters_total,
            wall_seconds: r.wall_seconds,
            certify_seconds: r.certify_seconds,
            certified: r.certified,
            stop_reason: r.stop_reason,
            tuple: r.to_string(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CurveRecord {
    pub theta: f64,
    pub largeness: f64,
    pub averaging: f64,
    pub valid: bool,
}

impl From<&LCurvePoint> for CurveRecord {
    fn from(p: &LCurvePoint) -> Self {
        Self {
            theta: p.theta,
            largeness: p.largeness,
            averaging: p.averaging,
            valid: p.valid,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FeatureRecord {
    pub theta: f64,
    pub s_i: usize,
    pub n_i: usize,
    pub f_min: f64,
    pub support_rows: Vec<usize>,
    pub support_cols: Vec<usize>,
    pub sigma: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    /// Per-pixel intensity of the feature in the input's units; differs from
    /// `u` only for negative extraction.
    pub intensity: Vec<f64>,
    pub solver: SolverStats,
    /// L-curve points of the sweep that selected this feature; empty for `solve`.
    pub curve: Vec<CurveRecord>,
}

impl FeatureRecord {
    fn new(f: &Feature, theta: f64, report: &SolveReport, curve: &[LCurvePoint], negative_scale: Option<f64>) -> Self {
        Self {
            theta,
            s_i: f.size,
            n_i: f.n_images,
            f_min: f.f_min,
            support_rows: f.support.rows.clone(),
            support_cols: f.support.cols.clone(),
            sigma: f.sigma,
            u: f.u.clone(),
            v: f.v.clone(),
            intensity: match negative_scale {
                Some(s) => pipeline::negative_intensities(&f.u, s),
                None => f.u.clone(),
            },
            solver: report.into(),
            curve: curve.iter().map(Into::into).collect(),
        }
    }
}

/// JSON report written by `solve` and `extract`.
///
/// `theta`, `objective`, `solver`, `x1` and `x2` are null for `extract`;
/// `images` is null unless image dimensions are known.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub schema: u32,
    pub command: String,
    pub rows: usize,
    pub cols: usize,
    pub images: Option<[usize; 2]>,
    pub negative: bool,
    pub theta: Option<f64>,
    pub objective: Option<f64>,
    pub solver: Option<SolverStats>,
    pub x1: Option<Vec<Vec<f64>>>,
    pub x2: Option<Vec<Vec<f64>>>,
    pub features: Vec<FeatureRecord>,
}

fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn write_json(value: &impl Serialize, path: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    match path {
        Some(p) => fs::write(p, text + "\n")?,
        None => {
            let mut out = std::io::stdout().lock();
            writeln!(out, "{text}")?;
        }
    }
    Ok(())
}

fn cmd_solve(args: SolveArgs) -> Result<i32> {
    let file: SolveArgs = load_config(args.config.as_deref())?;
    let input = required(args.input.or(file.input), "input")?;
    let theta = required(args.theta.or(file.theta), "theta")?;
    let out = args.out.or(file.out);
    let settings = args.solver.overlay(file.solver).settings()?;

    let a = matio::read_matrix_csv(&input)?;
    let spec = ProblemSpec::new(a.clone(), theta)?;
    let solved = pipeline::solve(&spec, &settings)?;
    let objective = spec.objective(&solved.x)?;
    let mut features = Vec::new();
    if let Ok(support) = crate::certificate::extract_support(&solved.x.x2, crate::certificate::SUPPORT_THRESHOLD) {
        if let Ok(f) = Feature::from_support(&a, support) {
            features.push(FeatureRecord::new(&f, theta, &solved.report, &[], None));
        }
    }
    let report = RunReport {
        schema: REPORT_SCHEMA,
        command: "solve".into(),
        rows: a.nrows(),
        cols: a.ncols(),
        images: None,
        negative: false,
        theta: Some(theta),
        objective: Some(objective),
        solver: Some((&solved.report).into()),
        x1: Some(to_rows(&solved.x.x1)),
        x2: Some(to_rows(&solved.x.x2)),
        features,
    };
    write_json(&report, out.as_deref())?;
    Ok(if solved.report.stop_reason.converged() {
        EXIT_OK
    } else {
        EXIT_ITERATION_CAP
    })
}

/// 255 on the feature's pixels, 0 elsewhere.
pub fn support_mask(support: &SupportPattern, pixels: usize) -> Vec<f64> {
    let mut mask = vec![0.0; pixels];
    for &r in &support.rows {
        if r < pixels {
            mask[r] = 255.0;
        }
    }
    mask
}

fn cmd_extract(args: ExtractArgs) -> Result<i32> {
    let file: ExtractArgs = load_config(args.config.as_deref())?;
    let out_dir = required(args.out.or(file.out), "out")?;
    let (a, dims) = match (args.input.or(file.input), args.images.or(file.images)) {
        (Some(csv), None) => {
            let a = matio::read_matrix_csv(&csv)?;
            let dims = match (args.height.or(file.height), args.width.or(file.width)) {
                (Some(h), Some(w)) => {
                    if h * w != a.nrows() {
                        return Err(Error::InvalidConfig(format!(
                            "image size {h}x{w} does not match {} matrix rows",
                            a.nrows()
                        )));
                    }
                    Some([h, w])
                }
                (None, None) => None,
                _ => return Err(Error::InvalidConfig("--height and --width go together".into())),
            };
            (a, dims)
        }
        (None, Some(dir)) => {
            let stack = matio::load_image_stack(&dir)?;
            (stack.matrix, Some([stack.pixel_rows, stack.pixel_cols]))
        }
        (Some(_), Some(_)) => return Err(Error::InvalidConfig("give either --input or --images".into())),
        (None, None) => return Err(Error::InvalidConfig("missing required option --input or --images".into())),
    };
    let d = ExtractionConfig::default();
    let cfg = ExtractionConfig {
        theta_grid: match args.theta_grid.or(file.theta_grid) {
            Some(g) => parse_theta_grid(&g)?,
            None => d.theta_grid,
        },
        max_features: args.max_features.or(file.max_features).unwrap_or(d.max_features),
        solver: args.solver.overlay(file.solver).settings()?,
        negative: args.negative || file.negative,
        negative_scale: args.negative_scale.or(file.negative_scale).unwrap_or(d.negative_scale),
        jobs: args.jobs.or(file.jobs).unwrap_or(d.jobs).max(1),
    };
    cfg.validate()?;

    let found: Vec<Extracted> = pipeline::run_extraction(&a, &cfg)?;
    fs::create_dir_all(&out_dir)?;
    let neg = cfg.negative.then_some(cfg.negative_scale);
    let features: Vec<FeatureRecord> = found
        .iter()
        .map(|e| FeatureRecord::new(&e.feature, e.theta, &e.report, &e.curve, neg))
        .collect();
    if let Some([h, w]) = dims {
        for (k, e) in found.iter().enumerate() {
            let mask = support_mask(&e.feature.support, h * w);
            matio::write_pgm(&mask, h, w, out_dir.join(format!("feature_{:02}.pgm", k + 1)))?;
        }
    }
    let report = RunReport {
        schema: REPORT_SCHEMA,
        command: "extract".into(),
        rows: a.nrows(),
        cols: a.ncols(),
        images: dims,
        negative: cfg.negative,
        theta: None,
        objective: None,
        solver: None,
        x1: None,
        x2: None,
        features,
    };
    write_json(&report, Some(&out_dir.join("report.json")))?;
    Ok(if found.is_empty() { EXIT_NO_FEATURES } else { EXIT_OK })
}

fn print_certificate(r: &CertificateResult, out: &mut impl Write) -> std::io::Result<()> {
    let opt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.6e}"));
    match &r.support {
        Some(s) => writeln!(out, "support        {}x{}", s.rows.len(), s.cols.len())?,
        None => writeln!(out, "support        empty")?,
    }
    writeln!(out, "newton_iters   {}", r.newton_iters)?;
    let k = r.kantorovich.as_ref();
    writeln!(out, "kantorovich_h  {}", opt(k.map(|k| k.h)))?;
    writeln!(out, "epsilon        {}", opt(r.triple.as_ref().map(|t| t.eps)))?;
    writeln!(out, "lambda         {}", opt(r.triple.as_ref().map(|t| t.lambda)))?;
    writeln!(out, "spectral_norm  {}", opt(r.w.as_ref().map(|_| r.spectral)))?;
    writeln!(out, "target         {}", opt(r.w.as_ref().map(|_| r.target)))?;
    writeln!(out, "subgrad_iters  {}", r.subgradient_iters)?;
    let m = r.margins.map(|m| m.as_array());
    for (k, name) in ["i", "ii", "iii", "iv", "v"].iter().enumerate() {
        writeln!(out, "margin_{name:<7} {}", opt(m.map(|m| m[k])))?;
    }
    if let Some(f) = r.failure {
        writeln!(out, "failure        {f:?}")?;
    }
    writeln!(out, "certified      {}", r.certified)
}

fn cmd_certify(args: CertifyArgs) -> Result<i32> {
    let file: CertifyArgs = load_config(args.config.as_deref())?;
    let input = required(args.input.or(file.input), "input")?;
    let x2_path = required(args.x2.or(file.x2), "x2")?;
    let theta = required(args.theta.or(file.theta), "theta")?;
    let eps_s = args.eps_s.or(file.eps_s).unwrap_or(CertifyConfig::default().eps_s);
    let a = matio::read_matrix_csv(&input)?;
    let x2 = matio::read_matrix_csv(&x2_path)?;
    let spec = ProblemSpec::new(a, theta)?;
    let x = PairedVariable { x1: x2.clone(), x2 };
    let cfg = CertifyConfig {
        eps_s,
        ..CertifyConfig::default()
    };
    let r = certify(&spec, &x, f64::NAN, &cfg)?;
    print_certificate(&r, &mut std::io::stdout().lock())?;
    Ok(if r.certified { EXIT_OK } else { EXIT_NOT_CERTIFIED })
}

#[derive(Debug, Serialize)]
struct GroundTruth {
    height: usize,
    width: usize,
    features: Vec<Rect>,
    images: Vec<Vec<usize>>,
}

/// Default parts rescaled to a `height × width` canvas.
fn scaled_parts(height: usize, width: usize, count: usize) -> Result<Vec<Rect>> {
    let d = SailboatSpec::default();
    if count == 0 || count > d.features.len() {
        return Err(Error::InvalidFixture(format!(
            "--features must be in 1..={}, got {count}",
            d.features.len()
        )));
    }
    let sr = |x: usize| x * height / d.height;
    let sc = |x: usize| x * width / d.width;
    Ok(d.features[..count]
        .iter()
        .map(|r| Rect::new(sr(r.row0), sr(r.row1), sc(r.col0), sc(r.col1)))
        .collect())
}

fn cmd_gen_sailboat(args: GenArgs) -> Result<i32> {
    let file: GenArgs = load_config(args.config.as_deref())?;
    let d = SailboatSpec::default();
    let out = required(args.out.or(file.out), "out")?;
    let height = args.height.or(file.height).unwrap_or(d.height);
    let width = args.width.or(file.width).unwrap_or(d.width);
    let count = args.features.or(file.features).unwrap_or(d.features.len());
    let spec = SailboatSpec {
        height,
        width,
        features: if (height, width, count) == (d.height, d.width, d.features.len()) {
            d.features.clone()
        } else {
            scaled_parts(height, width, count)?
        },
        images: args.images.or(file.images).unwrap_or(d.images),
        features_per_image: args.per_image.or(file.per_image).unwrap_or(d.features_per_image),
        seed: args.seed.or(file.seed).unwrap_or(d.seed),
    };
    let (stack, truth) = matio::gen_sailboat(&spec)?;
    fs::create_dir_all(&out)?;
    matio::write_matrix_csv(&stack.matrix, out.join("matrix.csv"))?;
    let images = out.join("images");
    fs::create_dir_all(&images)?;
    for j in 0..stack.matrix.ncols() {
        let img = stack.image(j);
        matio::write_pgm(&img.pixels, img.height, img.width, images.join(format!("image_{:03}.pgm", j + 1)))?;
    }
    let gt = GroundTruth {
        height,
        width,
        features: spec.features.clone(),
        images: truth,
    };
    write_json(&gt, Some(&out.join("truth.json")))?;
    Ok(EXIT_OK)
}

/// Runs the command line `args` (including the program name) and returns the
/// exit code. Usage problems and failures are reported on standard error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Extract(a) => cmd_extract(a),
        Command::Certify(a) => cmd_certify(a),
        Command::GenSailboat(a) => cmd_gen_sailboat(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, Error::InvalidConfig(ref m) if m.starts_with("missing required option")) {
                eprintln!("\nFor more information, try '--help'.");
            }
            EXIT_ERROR
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theta_grid_parsing() {
        assert_eq!(parse_theta_grid("0.1:0.3:3").unwrap().len(), 3);
        let g = parse_theta_grid("0.01:0.1:10,0.1:1:10,1:10:10").unwrap();
        assert_eq!(g, pipeline::default_theta_grid());
        assert_eq!(parse_theta_grid("0.5").unwrap(), vec![0.5]);
        assert!(parse_theta_grid("1:0:3").is_err());
        assert!(parse_theta_grid("a:b").is_err());
        assert!(parse_theta_grid("-1").is_err());
        assert!(parse_theta_grid("").is_err());
    }

    #[test]
    fn lambda0_values() {
        assert_eq!("auto".parse::<Lambda0>().unwrap(), Lambda0::Auto);
        assert_eq!("2.5".parse::<Lambda0>().unwrap(), Lambda0::Value(2.5));
        assert!("-1".parse::<Lambda0>().is_err());
        let v: Lambda0 = serde_json::from_str("3").unwrap();
        assert_eq!(v, Lambda0::Value(3.0));
        let v: Lambda0 = serde_json::from_str("\"auto\"").unwrap();
        assert_eq!(v, Lambda0::Auto);
    }

    #[test]
    fn command_line_beats_config() {
        let cli = SolverOpts {
            eps: Some(1e-3),
            ..Default::default()
        };
        let file = SolverOpts {
            eps: Some(1e-4),
            max_outer: Some(7),
            ..Default::default()
        };
        let s = cli.overlay(file).settings().unwrap();
        assert_eq!(s.eps, 1e-3);
        assert_eq!(s.max_outer, 7);
        assert_eq!(s.cert_cadence, 10);
        assert_eq!(s.max_inner, Some(30));
    }

    #[test]
    fn primal_keeps_its_inner_default() {
        let s = SolverOpts {
            algo: Some(AlgoArg::Primal),
            ..Default::default()
        }
        .settings()
        .unwrap();
        assert_eq!(s.max_inner, None);
    }

    #[test]
    fn scaled_parts_stay_disjoint() {
        let parts = scaled_parts(40, 25, 5).unwrap();
        for i in 0..parts.len() {
            for j in i + 1..parts.len() {
                assert!(!parts[i].overlaps(&parts[j]));
            }
        }
        assert!(scaled_parts(80, 50, 6).is_err());
    }

    #[test]
    fn mask_marks_support_rows() {
        let s = SupportPattern::new(vec![1, 3], vec![0], 4, 1).unwrap();
        assert_eq!(support_mask(&s, 4), vec![0.0, 255.0, 0.0, 255.0]);
    }
}

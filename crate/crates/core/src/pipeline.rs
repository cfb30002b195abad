//! Sequential feature extraction: θ sweep, L-curve selection, deflation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certificate::{self, CertificateCertifier, CertifyConfig, SupportPattern};
use crate::dual::{dual_solve, DualConfig};
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::primal::{primal_solve, PrimalConfig};
use crate::problem::{PairedVariable, ProblemSpec};
use crate::solver::{Algorithm, Certifier, SolveReport};

/// Solver choice and outer-loop settings shared by the CLI and the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    pub algorithm: Algorithm,
    pub eps: f64,
    pub max_outer: usize,
    /// `None` picks the algorithm's own default.
    pub max_inner: Option<usize>,
    /// `None` means `1/θ`.
    pub lambda0: Option<f64>,
    pub certify: bool,
    pub cert_cadence: usize,
    pub eps_s: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Dual,
            eps: 1e-6,
            max_outer: 1000,
            max_inner: None,
            lambda0: None,
            certify: true,
            cert_cadence: 10,
            eps_s: 1e-10,
        }
    }
}

/// A solve together with the certificate outcome, if any was attempted.
#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub x: PairedVariable,
    pub report: SolveReport,
    pub certificate: Option<certificate::CertificateResult>,
}

/// Indices of the rows and columns of `a` that are not identically zero.
fn nonzero_lines(a: &Matrix) -> (Vec<usize>, Vec<usize>) {
    let rows = (0..a.nrows()).filter(|&i| a.row(i).iter().any(|x| *x != 0.0)).collect();
    let cols = (0..a.ncols()).filter(|&j| a.column(j).iter().any(|x| *x != 0.0)).collect();
    (rows, cols)
}

fn pad(x: &Matrix, rows: &[usize], cols: &[usize], shape: (usize, usize)) -> Matrix {
    let mut full = Matrix::zeros(shape.0, shape.1);
    for (jj, &j) in cols.iter().enumerate() {
        for (ii, &i) in rows.iter().enumerate() {
            full[(i, j)] = x[(ii, jj)];
        }
    }
    full
}

/// Runs the selected solver with an optional certificate check.
///
/// Zero rows and columns of `A` carry no mass at the optimum, so the solver
/// runs on the remaining submatrix and the result is padded back with zeros.
/// Certification always sees the full problem.
pub fn solve(spec: &ProblemSpec, s: &SolverSettings) -> Result<SolveOutcome> {
    let (rows, cols) = nonzero_lines(spec.a());
    if rows.len() == spec.shape().0 && cols.len() == spec.shape().1 {
        return solve_full(spec, spec, s, None);
    }
    if rows.is_empty() {
        return Err(Error::ZeroMatrix);
    }
    let sub = Matrix::from_fn(rows.len(), cols.len(), |i, j| spec.a()[(rows[i], cols[j])]);
    let reduced = ProblemSpec::new(sub, spec.theta())?;
    let lift = |x: &PairedVariable| PairedVariable {
        x1: pad(&x.x1, &rows, &cols, spec.shape()),
        x2: pad(&x.x2, &rows, &cols, spec.shape()),
    };
    let mut out = solve_full(&reduced, spec, s, Some(&lift))?;
    out.x = lift(&out.x);
    Ok(out)
}

type Lift<'a> = &'a dyn Fn(&PairedVariable) -> PairedVariable;

fn solve_full(spec: &ProblemSpec, full: &ProblemSpec, s: &SolverSettings, lift: Option<Lift>) -> Result<SolveOutcome> {
    let theta = spec.theta();
    let mut cert = CertificateCertifier::new(CertifyConfig {
        eps_s: s.eps_s,
        ..CertifyConfig::default()
    });
    let mut lifted = |_: &ProblemSpec, x: &PairedVariable, multiplier: f64| -> bool {
        match lift {
            Some(f) => cert.check(full, &f(x), multiplier),
            None => cert.check(full, x, multiplier),
        }
    };
    let hook: Option<&mut dyn Certifier> = if s.certify { Some(&mut lifted) } else { None };
    let (x, report) = match s.algorithm {
        Algorithm::Dual => {
            let mut cfg = DualConfig::for_theta(theta);
            cfg.eps = s.eps;
            cfg.inner_tol = s.eps;
            cfg.max_outer = s.max_outer;
            cfg.cert_cadence = s.cert_cadence;
            if let Some(m) = s.max_inner {
                cfg.max_inner = m;
            }
            if let Some(l) = s.lambda0 {
                cfg.lambda0 = l;
                cfg.lambda_max = cfg.lambda_max.max(l);
            }
            let out = dual_solve(spec, &cfg, hook)?;
            (out.x, out.report)
        }
        Algorithm::Primal => {
            let mut cfg = PrimalConfig::for_theta(theta);
            cfg.eps = s.eps;
            cfg.inner_tol = s.eps;
            cfg.max_outer = s.max_outer;
            cfg.cert_cadence = s.cert_cadence;
            if let Some(m) = s.max_inner {
                cfg.max_inner = m;
            }
            if let Some(l) = s.lambda0 {
                cfg.lambda0 = l;
                cfg.lambda_max = cfg.lambda_max.max(l);
            }
            let out = primal_solve(spec, &cfg, hook)?;
            (out.x, out.report)
        }
    };
    let certificate = if report.certified { cert.last } else { None };
    Ok(SolveOutcome { x, report, certificate })
}

/// One θ of the sweep.
#[derive(Debug, Clone, Serialize)]
pub struct LCurvePoint {
    pub theta: f64,
    /// `‖X(M,N)‖_F` with `X(M,N)` the best rank-one approximation of `A(M,N)`.
    pub largeness: f64,
    /// `‖A(M,N) − X(M,N)‖_F`.
    pub averaging: f64,
    pub support: Option<SupportPattern>,
    /// Solver converged (residual or certificate) and the support is nonempty.
    pub valid: bool,
    pub report: SolveReport,
}

/// Restriction `A(M,N)`.
pub fn submatrix(a: &Matrix, s: &SupportPattern) -> Matrix {
    Matrix::from_fn(s.rows.len(), s.cols.len(), |i, j| a[(s.rows[i], s.cols[j])])
}

fn curve_measures(a: &Matrix, s: &SupportPattern) -> Result<(f64, f64)> {
    let sub = submatrix(a, s);
    if sub.iter().all(|x| *x == 0.0) {
        return Ok((0.0, 0.0));
    }
    let (sigma, u, v) = linalg::rank_one_approx(&sub)?;
    let approx = &u * v.transpose() * sigma;
    Ok((approx.norm(), (&sub - approx).norm()))
}

fn sweep_point(a: &Matrix, theta: f64, solver: &SolverSettings) -> Result<(LCurvePoint, PairedVariable)> {
    let spec = ProblemSpec::new(a.clone(), theta)?;
    let out = solve(&spec, solver)?;
    let support = certificate::extract_support(&out.x.x2, certificate::SUPPORT_THRESHOLD).ok();
    let (largeness, averaging) = match &support {
        Some(s) => curve_measures(a, s)?,
        None => (0.0, 0.0),
    };
    let valid = out.report.stop_reason.converged() && support.is_some();
    Ok((
        LCurvePoint {
            theta,
            largeness,
            averaging,
            support,
            valid,
            report: out.report,
        },
        out.x,
    ))
}

/// Solves at every θ of `grid`, on `jobs` threads (results in grid order).
pub fn sweep_theta(a: &Matrix, grid: &[f64], solver: &SolverSettings, jobs: usize) -> Result<Vec<LCurvePoint>> {
    Ok(sweep_with_solutions(a, grid, solver, jobs)?.into_iter().map(|(p, _)| p).collect())
}

fn sweep_with_solutions(
    a: &Matrix,
    grid: &[f64],
    solver: &SolverSettings,
    jobs: usize,
) -> Result<Vec<(LCurvePoint, PairedVariable)>> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig("theta grid is empty".into()));
    }
    let run = || grid.par_iter().map(|&t| sweep_point(a, t, solver)).collect::<Vec<_>>();
    let results = if jobs <= 1 {
        grid.iter().map(|&t| sweep_point(a, t, solver)).collect::<Vec<_>>()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?
            .install(run)
    };
    let mut out = Vec::with_capacity(results.len());
    let mut any_ok = false;
    let mut first_err = None;
    for r in results {
        match r {
            Ok(p) => {
                any_ok |= p.0.valid;
                out.push(p);
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    if !any_ok {
        return match first_err {
            Some(e) if out.is_empty() => Err(e),
            _ => Err(Error::AllSolvesFailed),
        };
    }
    Ok(out)
}

/// Relative size below which the averaging measure counts as zero.
const ZERO_AVERAGING: f64 = 1e-9;

fn turning_angle(p: (f64, f64), q: (f64, f64), r: (f64, f64)) -> f64 {
    let d1 = (q.0 - p.0, q.1 - p.1);
    let d2 = (r.0 - q.0, r.1 - q.1);
    if d1 == (0.0, 0.0) || d2 == (0.0, 0.0) {
        return 0.0;
    }
    let cross = d1.0 * d2.1 - d1.1 * d2.0;
    let dot = d1.0 * d2.0 + d1.1 * d2.1;
    cross.atan2(dot).abs()
}

/// Index (into `points`) of the selected θ.
///
/// Points with zero averaging take precedence: among them the largest
/// largeness wins, ties going to the smaller θ. Otherwise the interior point
/// of the `(largeness, averaging)` polyline with the largest turning angle is
/// chosen, again breaking ties towards smaller θ.
pub fn select_theta_index(points: &[LCurvePoint]) -> Result<usize> {
    let mut valid: Vec<usize> = (0..points.len()).filter(|&i| points[i].valid).collect();
    if valid.is_empty() {
        return Err(Error::NoValidPoints);
    }
    valid.sort_by(|&a, &b| points[a].theta.total_cmp(&points[b].theta));

    let zero: Vec<usize> = valid
        .iter()
        .copied()
        .filter(|&i| points[i].averaging <= ZERO_AVERAGING * points[i].largeness.max(f64::MIN_POSITIVE))
        .collect();
    if !zero.is_empty() {
        let best = zero.iter().map(|&i| points[i].largeness).fold(f64::NEG_INFINITY, f64::max);
        let tol = 1e-9 * best.abs();
        return Ok(*zero.iter().find(|&&i| points[i].largeness >= best - tol).unwrap());
    }

    let xy: Vec<(f64, f64)> = valid.iter().map(|&i| (points[i].largeness, points[i].averaging)).collect();
    let mut best = (0usize, f64::NEG_INFINITY);
    for k in 0..valid.len() {
        let curv = if k == 0 || k + 1 == valid.len() {
            0.0
        } else {
            turning_angle(xy[k - 1], xy[k], xy[k + 1])
        };
        if curv > best.1 + 1e-12 {
            best = (k, curv);
        }
    }
    Ok(valid[best.0])
}

pub fn select_theta(points: &[LCurvePoint]) -> Result<f64> {
    Ok(points[select_theta_index(points)?].theta)
}

/// A rank-one block `A(M,N) ≈ u vᵀ` with `max(v) = 1`.
#[derive(Debug, Clone, Serialize)]
pub struct Feature {
    pub support: SupportPattern,
    /// Intensities on `M`.
    pub u: Vec<f64>,
    /// Significance factor of every image in `N`.
    pub v: Vec<f64>,
    /// Leading singular value of `A(M,N)`.
    pub sigma: f64,
    /// `|M|`.
    pub size: usize,
    /// `|N|`.
    pub n_images: usize,
    pub f_min: f64,
}

impl Feature {
    pub fn from_support(a: &Matrix, support: SupportPattern) -> Result<Self> {
        let sub = submatrix(a, &support);
        let (sigma, mut u, mut v) = match linalg::rank_one_approx(&sub) {
            Ok(t) => t,
            Err(Error::ZeroMatrix) => return Err(Error::NoFeatureFound),
            Err(e) => return Err(e),
        };
        if v.sum() < 0.0 {
            u.neg_mut();
            v.neg_mut();
        }
        let vmax = v.max();
        if !(vmax > 0.0) {
            return Err(Error::NoFeatureFound);
        }
        let v_norm: Vec<f64> = v.iter().map(|x| (x / vmax).max(0.0)).collect();
        let u_scaled: Vec<f64> = u.iter().map(|x| x * sigma * vmax).collect();
        let f_min = v_norm.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(Self {
            size: support.rows.len(),
            n_images: support.cols.len(),
            support,
            u: u_scaled,
            v: v_norm,
            sigma,
            f_min,
        })
    }
}

/// Copy of `a` with `A(M,N)` set to zero.
pub fn deflate(a: &Matrix, f: &Feature) -> Matrix {
    let mut out = a.clone();
    for &i in &f.support.rows {
        for &j in &f.support.cols {
            out[(i, j)] = 0.0;
        }
    }
    out
}

/// `scale·E − A`.
pub fn negative_transform(a: &Matrix, scale: f64) -> Result<Matrix> {
    if let Some(v) = a.iter().find(|v| **v > scale) {
        return Err(Error::ValueAboveScale(*v, scale));
    }
    Ok(a.map(|x| scale - x))
}

/// `u_n = scale·e − u`, mapping a negative feature back to intensities.
pub fn negative_intensities(u: &[f64], scale: f64) -> Vec<f64> {
    u.iter().map(|x| scale - x).collect()
}

/// The default grid: ten uniform values in each of `[0.01, 0.1]`, `[0.1, 1]`
/// and `[1, 10]`, with shared endpoints kept once.
pub fn default_theta_grid() -> Vec<f64> {
    let mut g = Vec::new();
    for (a, b) in [(0.01, 0.1), (0.1, 1.0), (1.0, 10.0)] {
        g.extend(linspace(a, b, 10));
    }
    normalize_grid(g)
}

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Sorts ascending and drops near-duplicates.
pub fn normalize_grid(mut g: Vec<f64>) -> Vec<f64> {
    g.sort_by(f64::total_cmp);
    g.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs().max(1.0));
    g
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractionConfig {
    pub theta_grid: Vec<f64>,
    pub max_features: usize,
    pub solver: SolverSettings,
    pub negative: bool,
    pub negative_scale: f64,
    pub jobs: usize,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        Self {
            theta_grid: default_theta_grid(),
            max_features: 10,
            solver: SolverSettings {
                max_inner: Some(30),
                ..SolverSettings::default()
            },
            negative: false,
            negative_scale: 255.0,
            jobs: 1,
        }
    }
}

impl ExtractionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.theta_grid.is_empty() {
            return Err(Error::InvalidConfig("theta grid is empty".into()));
        }
        if self.theta_grid.windows(2).any(|w| !(w[0] < w[1])) || !(self.theta_grid[0] > 0.0) {
            return Err(Error::InvalidConfig("theta grid must be positive and strictly ascending".into()));
        }
        if self.max_features == 0 {
            return Err(Error::InvalidConfig("max_features must be at least 1".into()));
        }
        Ok(())
    }
}

/// One extracted feature with the run that produced it.
#[derive(Debug, Clone, Serialize)]
pub struct Extracted {
    pub feature: Feature,
    pub theta: f64,
    pub report: SolveReport,
    pub curve: Vec<LCurvePoint>,
}

/// Sweeps θ on `a`, selects one, and turns its support into a feature.
pub fn extract_next_feature(a: &Matrix, cfg: &ExtractionConfig) -> Result<Extracted> {
    cfg.validate()?;
    let sweep = match sweep_with_solutions(a, &cfg.theta_grid, &cfg.solver, cfg.jobs) {
        Ok(s) => s,
        Err(Error::AllSolvesFailed) | Err(Error::ZeroMatrix) => return Err(Error::NoFeatureFound),
        Err(e) => return Err(e),
    };
    let curve: Vec<LCurvePoint> = sweep.into_iter().map(|(p, _)| p).collect();
    let idx = match select_theta_index(&curve) {
        Ok(i) => i,
        Err(Error::NoValidPoints) => return Err(Error::NoFeatureFound),
        Err(e) => return Err(e),
    };
    let chosen = &curve[idx];
    let support = chosen.support.clone().ok_or(Error::NoFeatureFound)?;
    let feature = Feature::from_support(a, support)?;
    Ok(Extracted {
        feature,
        theta: chosen.theta,
        report: chosen.report.clone(),
        curve,
    })
}

/// Extracts features one by one, deflating after each, until `max_features`,
/// an all-zero remainder, or no further feature.
///
/// Every round solves on `A / ‖A‖₂`; features are reported in the units of
/// the input (or of `scale·E − A` when `negative` is set).
pub fn run_extraction(a: &Matrix, cfg: &ExtractionConfig) -> Result<Vec<Extracted>> {
    cfg.validate()?;
    let mut cur = if cfg.negative {
        negative_transform(a, cfg.negative_scale)?
    } else {
        a.clone()
    };
    let mut found = Vec::new();
    while found.len() < cfg.max_features {
        if cur.iter().all(|x| *x == 0.0) {
            break;
        }
        let norm = linalg::spectral_norm(&cur)?;
        let scaled = &cur / norm;
        let ex = match extract_next_feature(&scaled, cfg) {
            Ok(e) => e,
            Err(Error::NoFeatureFound) => break,
            Err(e) => return Err(e),
        };
        let feature = Feature::from_support(&cur, ex.feature.support.clone())?;
        cur = deflate(&cur, &feature);
        found.push(Extracted { feature, ..ex });
    }
    Ok(found)
}

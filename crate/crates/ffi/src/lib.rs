//! C ABI over the `laros` solvers.
//!
//! Every fallible function returns a [`LarosStatus`]; on failure a message is
//! available from [`laros_last_error_message`] until the next call on the same
//! thread. Matrices are passed as dense row-major `double` arrays. Handles are
//! opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use laros::pipeline::{self, ExtractionConfig, Extracted, SolverSettings};
use laros::{Algorithm, Error, Matrix, ProblemSpec, StopReason};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LarosStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    NoFeatureFound = 4,
    Numerical = 5,
    OutOfRange = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LarosAlgorithm {
    Dual = 0,
    Primal = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LarosStopReason {
    #[default]
    Residual = 0,
    Certified = 1,
    IterationCap = 2,
}

/// Solver settings. Start from [`laros_solve_options_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct LarosSolveOptions {
    pub algorithm: LarosAlgorithm,
    pub eps: f64,
    pub max_outer: usize,
    /// 0 keeps the algorithm's own default.
    pub max_inner: usize,
    /// Non-positive means `1/theta`.
    pub lambda0: f64,
    pub certify: bool,
    pub cert_cadence: usize,
    pub eps_s: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct LarosStats {
    pub outer_iters: usize,
    pub inner_iters_total: usize,
    pub wall_seconds: f64,
    pub certify_seconds: f64,
    pub certified: bool,
    pub stop_reason: LarosStopReason,
    pub objective: f64,
    pub residual: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct LarosFeatureInfo {
    pub theta: f64,
    /// Number of rows of the support.
    pub size: usize,
    /// Number of columns of the support.
    pub n_images: usize,
    pub sigma: f64,
    pub f_min: f64,
}

/// A matrix and its penalty parameter.
pub struct LarosProblem {
    spec: ProblemSpec,
}

/// Result of [`laros_solve`].
pub struct LarosSolution {
    x1: Matrix,
    x2: Matrix,
    stats: LarosStats,
}

/// Result of [`laros_extract`].
pub struct LarosFeatures {
    items: Vec<Extracted>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(e: &Error) -> LarosStatus {
    match e {
        Error::DimensionMismatch { .. } => LarosStatus::DimensionMismatch,
        Error::NoFeatureFound | Error::NoValidPoints | Error::AllSolvesFailed => LarosStatus::NoFeatureFound,
        Error::ConvergenceFailure | Error::SingularJacobian | Error::NoConvergence { .. } => LarosStatus::Numerical,
        _ => LarosStatus::InvalidArgument,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (LarosStatus, String)>) -> LarosStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LarosStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            LarosStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (LarosStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (LarosStatus, String) {
    (LarosStatus::NullPointer, format!("{what} is null"))
}

/// # Safety
/// `data` must point to `rows * cols` readable doubles.
unsafe fn read_matrix(data: *const f64, rows: usize, cols: usize) -> Result<Matrix, (LarosStatus, String)> {
    if data.is_null() {
        return Err(null("matrix data"));
    }
    let len = rows
        .checked_mul(cols)
        .ok_or((LarosStatus::InvalidArgument, "matrix size overflows".to_string()))?;
    if len == 0 {
        return Err((LarosStatus::InvalidArgument, "matrix is empty".into()));
    }
    let slice = std::slice::from_raw_parts(data, len);
    Ok(Matrix::from_row_slice(rows, cols, slice))
}

fn settings_of(o: &LarosSolveOptions) -> SolverSettings {
    let algorithm = match o.algorithm {
        LarosAlgorithm::Dual => Algorithm::Dual,
        LarosAlgorithm::Primal => Algorithm::Primal,
    };
    SolverSettings {
        algorithm,
        eps: o.eps,
        max_outer: o.max_outer,
        max_inner: (o.max_inner > 0).then_some(o.max_inner),
        lambda0: (o.lambda0 > 0.0).then_some(o.lambda0),
        certify: o.certify,
        cert_cadence: o.cert_cadence,
        eps_s: o.eps_s,
    }
}

fn check_settings(s: &SolverSettings) -> Result<(), (LarosStatus, String)> {
    if !(s.eps > 0.0) || !(s.eps_s > 0.0) || s.max_outer == 0 || s.cert_cadence == 0 {
        return Err((
            LarosStatus::InvalidArgument,
            "eps, eps_s, max_outer and cert_cadence must be positive".into(),
        ));
    }
    Ok(())
}

fn stop_of(r: StopReason) -> LarosStopReason {
    match r {
        StopReason::Residual => LarosStopReason::Residual,
        StopReason::Certified => LarosStopReason::Certified,
        StopReason::IterationCap => LarosStopReason::IterationCap,
    }
}

fn copy_matrix_out(m: &Matrix, out: *mut f64, len: usize) -> Result<(), (LarosStatus, String)> {
    if out.is_null() {
        return Err(null("output buffer"));
    }
    if len < m.len() {
        return Err((
            LarosStatus::OutOfRange,
            format!("buffer holds {len} values, {} needed", m.len()),
        ));
    }
    let (r, c) = m.shape();
    // SAFETY: the caller guarantees `len` writable doubles and `len >= r * c`.
    let dst = unsafe { std::slice::from_raw_parts_mut(out, len) };
    for i in 0..r {
        for j in 0..c {
            dst[i * c + j] = m[(i, j)];
        }
    }
    Ok(())
}

/// Message describing the last failure on this thread, or null. The pointer
/// stays valid until the next `laros_*` call on the same thread.
#[no_mangle]
pub extern "C" fn laros_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Fills `out` with the defaults used by the command line `solve`.
///
/// # Safety
/// `out` must be null or point to writable memory for one options struct.
#[no_mangle]
pub unsafe extern "C" fn laros_solve_options_default(out: *mut LarosSolveOptions) -> LarosStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let d = SolverSettings::default();
        *out = LarosSolveOptions {
            algorithm: LarosAlgorithm::Dual,
            eps: d.eps,
            max_outer: d.max_outer,
            max_inner: 30,
            lambda0: 0.0,
            certify: d.certify,
            cert_cadence: d.cert_cadence,
            eps_s: d.eps_s,
        };
        Ok(())
    })
}

/// Creates a problem from a row-major `rows × cols` matrix.
///
/// # Safety
/// `data` must point to `rows * cols` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn laros_problem_new(
    data: *const f64,
    rows: usize,
    cols: usize,
    theta: f64,
    out: *mut *mut LarosProblem,
) -> LarosStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let a = read_matrix(data, rows, cols)?;
        let spec = ProblemSpec::new(a, theta).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(LarosProblem { spec }));
        Ok(())
    })
}

/// # Safety
/// `p` must be null or a handle from [`laros_problem_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn laros_problem_free(p: *mut LarosProblem) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Runs one solve. `options` may be null for the defaults.
///
/// # Safety
/// `problem` must be a live handle, `options` null or valid, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn laros_solve(
    problem: *const LarosProblem,
    options: *const LarosSolveOptions,
    out: *mut *mut LarosSolution,
) -> LarosStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let problem = problem.as_ref().ok_or_else(|| null("problem"))?;
        let settings = match options.as_ref() {
            Some(o) => settings_of(o),
            None => SolverSettings {
                max_inner: Some(30),
                ..SolverSettings::default()
            },
        };
        check_settings(&settings)?;
        let solved = pipeline::solve(&problem.spec, &settings).map_err(lib_err)?;
        let r = &solved.report;
        let stats = LarosStats {
            outer_iters: r.outer_iters,
            inner_iters_total: r.inner_iters_total,
            wall_seconds: r.wall_seconds,
            certify_seconds: r.certify_seconds,
            certified: r.certified,
            stop_reason: stop_of(r.stop_reason),
            objective: problem.spec.objective(&solved.x).map_err(lib_err)?,
            residual: r.residual,
        };
        *out = Box::into_raw(Box::new(LarosSolution {
            x1: solved.x.x1,
            x2: solved.x.x2,
            stats,
        }));
        Ok(())
    })
}

/// # Safety
/// `s` must be null or a handle from [`laros_solve`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn laros_solution_free(s: *mut LarosSolution) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// # Safety
/// `s` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn laros_solution_stats(s: *const LarosSolution, out: *mut LarosStats) -> LarosStatus {
    guard(|| {
        let s = s.as_ref().ok_or_else(|| null("solution"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = s.stats;
        Ok(())
    })
}

/// Copies `X₁` row-major into `buf`, which holds `len` doubles.
///
/// # Safety
/// `s` must be a live handle and `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn laros_solution_x1(s: *const LarosSolution, buf: *mut f64, len: usize) -> LarosStatus {
    guard(|| copy_matrix_out(&s.as_ref().ok_or_else(|| null("solution"))?.x1, buf, len))
}

/// Copies `X₂` row-major into `buf`, which holds `len` doubles.
///
/// # Safety
/// `s` must be a live handle and `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn laros_solution_x2(s: *const LarosSolution, buf: *mut f64, len: usize) -> LarosStatus {
    guard(|| copy_matrix_out(&s.as_ref().ok_or_else(|| null("solution"))?.x2, buf, len))
}

/// Sequential feature extraction with the default θ grid.
///
/// `max_features` of 0 keeps the default; `negative_scale > 0` extracts dark
/// features of `negative_scale − A`. `options` may be null.
///
/// # Safety
/// `data` must point to `rows * cols` doubles, `options` null or valid, `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn laros_extract(
    data: *const f64,
    rows: usize,
    cols: usize,
    options: *const LarosSolveOptions,
    max_features: usize,
    negative_scale: f64,
    out: *mut *mut LarosFeatures,
) -> LarosStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let a = read_matrix(data, rows, cols)?;
        let mut cfg = ExtractionConfig::default();
        if let Some(o) = options.as_ref() {
            cfg.solver = settings_of(o);
        }
        check_settings(&cfg.solver)?;
        if max_features > 0 {
            cfg.max_features = max_features;
        }
        if negative_scale > 0.0 {
            cfg.negative = true;
            cfg.negative_scale = negative_scale;
        }
        let items = pipeline::run_extraction(&a, &cfg).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(LarosFeatures { items }));
        Ok(())
    })
}

/// # Safety
/// `f` must be null or a handle from [`laros_extract`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn laros_features_free(f: *mut LarosFeatures) {
    if !f.is_null() {
        drop(Box::from_raw(f));
    }
}

/// Number of extracted features; 0 for a null handle.
///
/// # Safety
/// `f` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn laros_features_count(f: *const LarosFeatures) -> usize {
    f.as_ref().map_or(0, |f| f.items.len())
}

unsafe fn feature_at<'a>(f: *const LarosFeatures, index: usize) -> Result<&'a Extracted, (LarosStatus, String)> {
    let f = f.as_ref().ok_or_else(|| null("features"))?;
    f.items
        .get(index)
        .ok_or((LarosStatus::OutOfRange, format!("feature {index} of {}", f.items.len())))
}

/// # Safety
/// `f` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn laros_feature_info(f: *const LarosFeatures, index: usize, out: *mut LarosFeatureInfo) -> LarosStatus {
    guard(|| {
        let e = feature_at(f, index)?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = LarosFeatureInfo {
            theta: e.theta,
            size: e.feature.size,
            n_images: e.feature.n_images,
            sigma: e.feature.sigma,
            f_min: e.feature.f_min,
        };
        Ok(())
    })
}

fn copy_indices(src: &[usize], buf: *mut usize, len: usize) -> Result<(), (LarosStatus, String)> {
    if buf.is_null() {
        return Err(null("output buffer"));
    }
    if len < src.len() {
        return Err((
            LarosStatus::OutOfRange,
            format!("buffer holds {len} indices, {} needed", src.len()),
        ));
    }
    // SAFETY: the caller guarantees `len >= src.len()` writable slots.
    unsafe { ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len()) };
    Ok(())
}

/// Copies the zero-based support rows (length `size`) into `buf`.
///
/// # Safety
/// `f` must be a live handle and `buf` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn laros_feature_rows(f: *const LarosFeatures, index: usize, buf: *mut usize, len: usize) -> LarosStatus {
    guard(|| copy_indices(&feature_at(f, index)?.feature.support.rows, buf, len))
}

/// Copies the zero-based support columns (length `n_images`) into `buf`.
///
/// # Safety
/// `f` must be a live handle and `buf` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn laros_feature_cols(f: *const LarosFeatures, index: usize, buf: *mut usize, len: usize) -> LarosStatus {
    guard(|| copy_indices(&feature_at(f, index)?.feature.support.cols, buf, len))
}

use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the solver stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {0}")]
    MissingFile(PathBuf),
    #[error("line {line}: expected {expected} fields, found {found}")]
    RaggedRows {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}, column {col}: not a finite number")]
    NonNumericField { line: usize, col: usize },
    #[error("empty matrix input")]
    EmptyMatrix,
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a PGM file (bad magic number)")]
    BadMagic,
    #[error("malformed PGM header: {0}")]
    BadHeader(String),
    #[error("PGM payload truncated: expected {expected} pixels, found {found}")]
    TruncatedPayload { expected: usize, found: usize },
    #[error("pixel value {0} outside [0, 255]")]
    ValueOutOfRange(f64),
    #[error("images have mixed dimensions: {0}")]
    MixedDimensions(String),
    #[error("directory contains no PGM images: {0}")]
    EmptyDirectory(PathBuf),
    #[error("features overlap: rectangles {0} and {1}")]
    OverlappingFeatures(usize, usize),
    #[error("invalid fixture specification: {0}")]
    InvalidFixture(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: String, got: String },
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("SVD failed to converge within the iteration cap")]
    ConvergenceFailure,
    #[error("matrix is identically zero")]
    ZeroMatrix,

    #[error("support is empty")]
    EmptySupport,
    #[error("Newton Jacobian is singular")]
    SingularJacobian,
    #[error("Newton iteration did not converge after {iterations} steps (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("knapsack box is infeasible: {0}")]
    InfeasibleBox(String),
    #[error("certificate margins are infeasible: theta {theta} less than slack {slack}")]
    InfeasibleMargins { theta: f64, slack: f64 },

    #[error("every theta in the sweep failed to converge")]
    AllSolvesFailed,
    #[error("no valid L-curve points")]
    NoValidPoints,
    #[error("no feature found at any theta")]
    NoFeatureFound,
    #[error("entry {0} exceeds the negative-transform scale {1}")]
    ValueAboveScale(f64, f64),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn mismatch(expected: (usize, usize), got: (usize, usize)) -> Error {
    Error::DimensionMismatch {
        expected: format!("{}x{}", expected.0, expected.1),
        got: format!("{}x{}", got.0, got.1),
    }
}

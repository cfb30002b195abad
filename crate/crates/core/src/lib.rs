//! Solvers for the LAROS ("large approximately rank-one submatrix") program
//!
//! ```text
//!   min ‖X‖_* + θ‖X‖₁   s.t.  ⟨A, X⟩ = 1
//! ```
//!
//! by primal and dual proximal point methods, an optimality certificate for
//! rank-one solutions, and a sequential feature-extraction pipeline built on
//! top of them.

pub mod certificate;
pub mod cli;
pub mod dual;
pub mod error;
pub mod linalg;
pub mod matio;
pub mod pipeline;
pub mod primal;
pub mod problem;
pub mod solver;

pub use error::{Error, Result};
pub use linalg::{Matrix, Vector};
pub use problem::{apply_adjoint, apply_map, DualPoint, PairedVariable, ProblemSpec};
pub use solver::{Algorithm, Certifier, SolveReport, StopReason};

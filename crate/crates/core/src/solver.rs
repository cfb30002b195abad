//! Pieces shared by the primal and dual proximal point solvers.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::problem::{PairedVariable, ProblemSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Primal,
    Dual,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Algorithm::Primal => f.write_str("primal"),
            Algorithm::Dual => f.write_str("dual"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Residual,
    Certified,
    IterationCap,
}

impl StopReason {
    pub fn converged(self) -> bool {
        !matches!(self, StopReason::IterationCap)
    }
}

/// Run statistics. Displays as the tuple
/// `(outer iterations, inner iterations, total seconds, certification seconds)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub algorithm: Algorithm,
    pub outer_iters: usize,
    pub inner_iters_total: usize,
    pub wall_seconds: f64,
    pub certify_seconds: f64,
    pub certify_calls: usize,
    pub certified: bool,
    pub stop_reason: StopReason,
    pub objective: f64,
    pub residual: f64,
    /// Final multiplier estimate for the constraint `⟨A, X₁⟩ = 1`; equals the
    /// optimal value at convergence.
    pub multiplier: f64,
}

impl fmt::Display for SolveReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({},{},{:.2}s,{:.2}s)",
            self.outer_iters, self.inner_iters_total, self.wall_seconds, self.certify_seconds
        )
    }
}

/// Early-termination test invoked by the outer loops.
///
/// `multiplier` is the solver's current estimate of the multiplier attached to
/// `⟨A, X₁⟩ = 1`. Returning `true` stops the solve with
/// [`StopReason::Certified`].
pub trait Certifier {
    fn check(&mut self, spec: &ProblemSpec, x: &PairedVariable, multiplier: f64) -> bool;
}

impl<F> Certifier for F
where
    F: FnMut(&ProblemSpec, &PairedVariable, f64) -> bool,
{
    fn check(&mut self, spec: &ProblemSpec, x: &PairedVariable, multiplier: f64) -> bool {
        self(spec, x, multiplier)
    }
}

/// Summable inner tolerance schedule `min(0.1, k^-power) · scale`.
pub(crate) fn inner_tolerance(outer: usize, power: f64, scale: f64) -> f64 {
    let k = outer.max(1) as f64;
    (0.1f64).min(k.powf(-power)) * scale
}

pub(crate) fn validate_schedule(
    lambda0: f64,
    lambda_growth: f64,
    lambda_max: f64,
    eps: f64,
    max_inner: usize,
    cadence: usize,
) -> crate::Result<()> {
    use crate::Error::InvalidConfig;
    if !(eps > 0.0) {
        return Err(InvalidConfig(format!("eps must be positive, got {eps}")));
    }
    if !(lambda0 > 0.0 && lambda0.is_finite()) {
        return Err(InvalidConfig(format!("lambda0 must be positive, got {lambda0}")));
    }
    if !(lambda_growth >= 1.0) {
        return Err(InvalidConfig(format!(
            "lambda growth must be at least 1, got {lambda_growth}"
        )));
    }
    if !(lambda_max >= lambda0) {
        return Err(InvalidConfig(format!(
            "lambda cap {lambda_max} below lambda0 {lambda0}"
        )));
    }
    if max_inner == 0 {
        return Err(InvalidConfig("max_inner must be at least 1".into()));
    }
    if cadence == 0 {
        return Err(InvalidConfig("certification cadence must be at least 1".into()));
    }
    Ok(())
}

//! Primal proximal point method.
//!
//! Each outer iteration maximizes the concave inner function
//!
//! ```text
//! Θ_λ(X, z) = ⟨z, b⟩ − (1/2λ)‖p_λ⁽¹⁾(X₁ + λ(Az₁ + Z₂))‖² − (1/2λ)‖p_λθ⁽²⁾(X₂ − λZ₂)‖²
//! ```
//!
//! by fixed-step gradient ascent, then moves `X` to the two proximal points
//! evaluated at the inner maximizer.

use std::time::Instant;

use crate::error::{mismatch, Result};
use crate::linalg::{self, Matrix};
use crate::problem::{apply_map, DualPoint, PairedVariable, ProblemSpec};
use crate::solver::{inner_tolerance, validate_schedule, Algorithm, Certifier, SolveReport, StopReason};

#[derive(Debug, Clone, PartialEq)]
pub struct PrimalConfig {
    pub lambda0: f64,
    pub lambda_growth: f64,
    pub lambda_max: f64,
    pub eps: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    /// Scale of the inner gradient-norm tolerance `min(0.1, k⁻²) · inner_tol`.
    pub inner_tol: f64,
    pub cert_cadence: usize,
}

impl PrimalConfig {
    /// Defaults anchored at `λ₀ = 1/θ`.
    pub fn for_theta(theta: f64) -> Self {
        Self {
            lambda0: 1.0 / theta,
            lambda_growth: 1.2,
            lambda_max: 1e4 / theta,
            eps: 1e-6,
            max_outer: 1000,
            max_inner: 20_000,
            inner_tol: 1e-6,
            cert_cadence: 10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        validate_schedule(
            self.lambda0,
            self.lambda_growth,
            self.lambda_max,
            self.eps,
            self.max_inner,
            self.cert_cadence,
        )
    }
}

#[derive(Debug, Clone)]
pub struct PrimalState {
    pub x: PairedVariable,
    pub z: DualPoint,
    pub lambda: f64,
    pub outer_iter: usize,
    pub inner_iter_total: usize,
    /// `‖X^{k+1} − X^k‖ / λ_k` of the last step.
    pub residual: f64,
}

impl PrimalState {
    pub fn initial(spec: &ProblemSpec, cfg: &PrimalConfig) -> Self {
        let (m, n) = spec.shape();
        Self {
            x: PairedVariable::zeros(m, n),
            z: DualPoint::zeros(m, n),
            lambda: cfg.lambda0,
            outer_iter: 0,
            inner_iter_total: 0,
            residual: f64::INFINITY,
        }
    }
}

struct InnerEval {
    value: f64,
    gradient: DualPoint,
    p1: Matrix,
    p2: Matrix,
}

fn evaluate(spec: &ProblemSpec, x: &PairedVariable, z: &DualPoint, lambda: f64) -> Result<InnerEval> {
    if x.shape() != spec.shape() {
        return Err(mismatch(spec.shape(), x.shape()));
    }
    if z.shape() != spec.shape() {
        return Err(mismatch(spec.shape(), z.shape()));
    }
    let arg1 = &x.x1 + (spec.a() * z.z1 + &z.z2) * lambda;
    let arg2 = &x.x2 - &z.z2 * lambda;
    let p1 = linalg::prox_nuclear(&arg1, lambda)?;
    let p2 = linalg::prox_l1(&arg2, lambda * spec.theta());
    let value = z.z1 - (p1.norm_squared() + p2.norm_squared()) / (2.0 * lambda);
    let gradient = DualPoint {
        z1: 1.0 - spec.a().dot(&p1),
        z2: &p2 - &p1,
    };
    Ok(InnerEval {
        value,
        gradient,
        p1,
        p2,
    })
}

/// `Θ_λ(X, z)`.
pub fn theta_inner_value(spec: &ProblemSpec, x: &PairedVariable, z: &DualPoint, lambda: f64) -> Result<f64> {
    Ok(evaluate(spec, x, z, lambda)?.value)
}

/// `∇_zΘ_λ(X, z) = (1 − ⟨A, P₁⟩, P₂ − P₁)` with `P₁, P₂` the two proximal points.
pub fn theta_inner_gradient(
    spec: &ProblemSpec,
    x: &PairedVariable,
    z: &DualPoint,
    lambda: f64,
) -> Result<DualPoint> {
    Ok(evaluate(spec, x, z, lambda)?.gradient)
}

/// Result of one inner maximization.
#[derive(Debug, Clone)]
pub struct InnerSolution {
    pub z: DualPoint,
    pub iterations: usize,
    pub value: f64,
    pub gradient_norm: f64,
    /// Proximal points at `z`; these are the next primal iterate.
    pub prox: PairedVariable,
    /// Θ after each accepted ascent step, starting with the warm start.
    pub trace: Vec<f64>,
}

/// Gradient ascent on `z ↦ Θ_λ(X, z)` with step `1/(λ(‖A‖₂² + 2))`, from `warm`.
/// Stops when `‖∇Θ‖ ≤ tol · max(1, ‖b‖)` or after `max_iter` steps.
pub fn solve_inner(
    spec: &ProblemSpec,
    x: &PairedVariable,
    lambda: f64,
    warm: &DualPoint,
    tol: f64,
    max_iter: usize,
) -> Result<InnerSolution> {
    let step = 1.0 / spec.lipschitz(lambda);
    let threshold = tol * spec.b().norm().max(1.0);
    let mut z = warm.clone();
    let mut eval = evaluate(spec, x, &z, lambda)?;
    let mut trace = vec![eval.value];
    let mut iterations = 0;
    while eval.gradient.norm() > threshold && iterations < max_iter {
        z = &z + &(&eval.gradient * step);
        eval = evaluate(spec, x, &z, lambda)?;
        trace.push(eval.value);
        iterations += 1;
    }
    Ok(InnerSolution {
        z,
        iterations,
        value: eval.value,
        gradient_norm: eval.gradient.norm(),
        prox: PairedVariable {
            x1: eval.p1,
            x2: eval.p2,
        },
        trace,
    })
}

/// One outer iteration: inner solve at `λ_k`, proximal update, λ growth.
pub fn primal_step(spec: &ProblemSpec, state: &PrimalState, cfg: &PrimalConfig) -> Result<PrimalState> {
    let k = state.outer_iter + 1;
    let tol = inner_tolerance(k, 2.0, cfg.inner_tol);
    let inner = solve_inner(spec, &state.x, state.lambda, &state.z, tol, cfg.max_inner)?;
    let residual = (&inner.prox - &state.x).norm() / state.lambda;
    Ok(PrimalState {
        x: inner.prox,
        z: inner.z,
        lambda: (state.lambda * cfg.lambda_growth).min(cfg.lambda_max),
        outer_iter: k,
        inner_iter_total: state.inner_iter_total + inner.iterations,
        residual,
    })
}

#[derive(Debug, Clone)]
pub struct PrimalOutcome {
    pub x: PairedVariable,
    pub state: PrimalState,
    pub report: SolveReport,
}

/// Runs the primal method from `X⁰ = 0`, `z⁰ = 0`.
///
/// Hitting `max_outer` is not an error: the outcome carries the last iterate
/// with [`StopReason::IterationCap`].
pub fn primal_solve(
    spec: &ProblemSpec,
    cfg: &PrimalConfig,
    mut certifier: Option<&mut dyn Certifier>,
) -> Result<PrimalOutcome> {
    cfg.validate()?;
    let start = Instant::now();
    let mut certify_seconds = 0.0;
    let mut certify_calls = 0;
    let mut state = PrimalState::initial(spec, cfg);
    let mut stop = StopReason::IterationCap;
    while state.outer_iter < cfg.max_outer {
        state = primal_step(spec, &state, cfg)?;
        if state.residual < cfg.eps {
            stop = StopReason::Residual;
            break;
        }
        if let Some(c) = certifier.as_deref_mut() {
            if state.outer_iter.is_multiple_of(cfg.cert_cadence) {
                let t = Instant::now();
                let ok = c.check(spec, &state.x, state.z.z1);
                certify_seconds += t.elapsed().as_secs_f64();
                certify_calls += 1;
                if ok {
                    stop = StopReason::Certified;
                    break;
                }
            }
        }
    }
    let feas = &spec.b() - &apply_map(spec, &state.x)?;
    let report = SolveReport {
        algorithm: Algorithm::Primal,
        outer_iters: state.outer_iter,
        inner_iters_total: state.inner_iter_total,
        wall_seconds: start.elapsed().as_secs_f64(),
        certify_seconds,
        certify_calls,
        certified: stop == StopReason::Certified,
        stop_reason: stop,
        objective: spec.objective(&state.x)?,
        residual: feas.norm(),
        multiplier: state.z.z1,
    };
    Ok(PrimalOutcome {
        x: state.x.clone(),
        state,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spec(rng: &mut ChaCha8Rng, m: usize, n: usize, theta: f64) -> ProblemSpec {
        ProblemSpec::new(Matrix::from_fn(m, n, |_, _| rng.gen_range(0.0..1.0)), theta).unwrap()
    }

    fn random_point(rng: &mut ChaCha8Rng, m: usize, n: usize) -> (PairedVariable, DualPoint) {
        let x = PairedVariable {
            x1: Matrix::from_fn(m, n, |_, _| rng.gen_range(-1.0..1.0)),
            x2: Matrix::from_fn(m, n, |_, _| rng.gen_range(-1.0..1.0)),
        };
        let z = DualPoint {
            z1: rng.gen_range(-2.0..2.0),
            z2: Matrix::from_fn(m, n, |_, _| rng.gen_range(-1.0..1.0)),
        };
        (x, z)
    }

    #[test]
    fn value_at_origin() {
        let spec = ProblemSpec::new(Matrix::from_element(2, 2, 1.0), 0.3).unwrap();
        let x = PairedVariable::zeros(2, 2);
        let z = DualPoint::zeros(2, 2);
        assert_eq!(theta_inner_value(&spec, &x, &z, 3.0).unwrap(), 0.0);
        let g = theta_inner_gradient(&spec, &x, &z, 3.0).unwrap();
        assert_eq!(g, spec.b());
    }

    #[test]
    fn value_when_shrinkage_kills_everything() {
        // σ₁(A) = 2, so |z₁| ≤ 1/2 keeps λz₁A inside the shrinkage radius λ.
        let spec = ProblemSpec::new(Matrix::from_element(2, 2, 1.0), 0.3).unwrap();
        let x = PairedVariable::zeros(2, 2);
        for z1 in [-0.5, 0.1, 0.5] {
            let z = DualPoint {
                z1,
                z2: Matrix::zeros(2, 2),
            };
            let v = theta_inner_value(&spec, &x, &z, 1.7).unwrap();
            assert!((v - z1).abs() < 1e-14);
        }
    }

    #[test]
    fn value_matches_envelope_assembly() {
        // Θ + ‖X‖²/(2λ) equals the Moreau envelope assembled from the two
        // minimal values, each evaluated directly at its minimizer.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let spec = random_spec(&mut rng, 4, 3, 0.3);
            let (x, z) = random_point(&mut rng, 4, 3);
            let lambda = rng.gen_range(0.2..3.0);
            let theta = spec.theta();
            let y1 = &x.x1 + (spec.a() * z.z1 + &z.z2) * lambda;
            let y2 = &x.x2 - &z.z2 * lambda;
            let v1 = linalg::prox_nuclear(&y1, lambda).unwrap();
            let v2 = linalg::prox_l1(&y2, lambda * theta);
            let min1 = linalg::nuclear_norm(&v1).unwrap() + (&v1 - &y1).norm_squared() / (2.0 * lambda);
            let min2 = theta * linalg::l1_norm(&v2) + (&v2 - &y2).norm_squared() / (2.0 * lambda);
            let shift = y1.norm_squared() + y2.norm_squared();
            let envelope = z.z1 + x.norm_squared() / (2.0 * lambda) - shift / (2.0 * lambda) + min1 + min2;
            let got = theta_inner_value(&spec, &x, &z, lambda).unwrap() + x.norm_squared() / (2.0 * lambda);
            assert!((envelope - got).abs() < 1e-9, "{envelope} vs {got}");
        }
    }

    #[test]
    fn concavity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let spec = random_spec(&mut rng, 3, 3, 0.5);
        for _ in 0..50 {
            let (x, z) = random_point(&mut rng, 3, 3);
            let (_, w) = random_point(&mut rng, 3, 3);
            let t = rng.gen_range(0.0..1.0);
            let mid = &(&z * t) + &(&w * (1.0 - t));
            let lhs = theta_inner_value(&spec, &x, &mid, 1.0).unwrap();
            let rhs = t * theta_inner_value(&spec, &x, &z, 1.0).unwrap()
                + (1.0 - t) * theta_inner_value(&spec, &x, &w, 1.0).unwrap();
            assert!(lhs >= rhs - 1e-9);
        }
    }

    #[test]
    fn inner_ascent_is_monotone_and_restartable() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = random_spec(&mut rng, 4, 3, 0.4);
        let (x, _) = random_point(&mut rng, 4, 3);
        let sol = solve_inner(&spec, &x, 1.5, &DualPoint::zeros(4, 3), 1e-9, 100_000).unwrap();
        assert!(sol.gradient_norm <= 1e-9);
        for w in sol.trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-12);
        }
        let again = solve_inner(&spec, &x, 1.5, &sol.z, 1e-9, 100_000).unwrap();
        assert_eq!(again.iterations, 0);
    }

    #[test]
    fn inner_optimum_of_scalar_instance_matches_grid_search() {
        // A = [[1]], θ = 0.5, X = 0: maximize over (z₁, Z₂) ∈ ℝ².
        let spec = ProblemSpec::new(Matrix::from_element(1, 1, 1.0), 0.5).unwrap();
        let x = PairedVariable::zeros(1, 1);
        let lambda = 1.0;
        let sol = solve_inner(&spec, &x, lambda, &DualPoint::zeros(1, 1), 1e-12, 1_000_000).unwrap();
        let f = |a: f64, b: f64| {
            let z = DualPoint {
                z1: a,
                z2: Matrix::from_element(1, 1, b),
            };
            theta_inner_value(&spec, &x, &z, lambda).unwrap()
        };
        let (mut ca, mut cb, mut h) = (0.0, 0.0, 4.0);
        let mut best = f(ca, cb);
        for _ in 0..60 {
            let (mut na, mut nb) = (ca, cb);
            for i in -20..=20 {
                for j in -20..=20 {
                    let a = ca + h * i as f64 / 20.0;
                    let b = cb + h * j as f64 / 20.0;
                    let v = f(a, b);
                    if v > best {
                        best = v;
                        na = a;
                        nb = b;
                    }
                }
            }
            ca = na;
            cb = nb;
            h *= 0.5;
        }
        assert!((sol.value - best).abs() < 1e-6, "{} vs {}", sol.value, best);
    }

    #[test]
    fn zero_step_from_origin() {
        let spec = ProblemSpec::new(Matrix::from_element(2, 2, 1.0), 0.3).unwrap();
        let mut cfg = PrimalConfig::for_theta(0.3);
        cfg.max_inner = 1;
        let state = PrimalState::initial(&spec, &cfg);
        // One ascent step moves z off zero, so only check the z = 0 prox.
        let inner = solve_inner(&spec, &state.x, state.lambda, &state.z, 1e-9, 0).unwrap();
        assert_eq!(inner.prox, PairedVariable::zeros(2, 2));
    }

    #[test]
    fn scalar_solve() {
        let spec = ProblemSpec::new(Matrix::from_element(1, 1, 2.0), 0.5).unwrap();
        let cfg = PrimalConfig::for_theta(0.5);
        let out = primal_solve(&spec, &cfg, None).unwrap();
        assert_eq!(out.report.stop_reason, StopReason::Residual);
        assert!((out.x.x1[(0, 0)] - 0.5).abs() < 1e-6);
        assert!((out.x.x2[(0, 0)] - 0.5).abs() < 1e-6);
        assert!((out.report.objective - 0.75).abs() < 1e-6);
    }

    #[test]
    fn all_ones_solve() {
        let spec = ProblemSpec::new(Matrix::from_element(2, 2, 1.0), 0.3).unwrap();
        let cfg = PrimalConfig::for_theta(0.3);
        let out = primal_solve(&spec, &cfg, None).unwrap();
        assert!(out.report.stop_reason.converged());
        assert!((out.report.objective - 0.8).abs() < 1e-5);
        let quarter = Matrix::from_element(2, 2, 0.25);
        assert!((&out.x.x1 - &quarter).abs().max() < 1e-5);
        assert!((&out.x.x2 - &quarter).abs().max() < 1e-5);
        assert!((out.report.multiplier - 0.8).abs() < 1e-4);
    }

    #[test]
    fn certifier_stops_at_cadence() {
        let spec = ProblemSpec::new(Matrix::from_element(2, 2, 1.0), 0.3).unwrap();
        let mut cfg = PrimalConfig::for_theta(0.3);
        cfg.cert_cadence = 1;
        let mut calls = 0;
        let mut hook = |_: &ProblemSpec, _: &PairedVariable, _: f64| {
            calls += 1;
            true
        };
        let out = primal_solve(&spec, &cfg, Some(&mut hook)).unwrap();
        assert_eq!(out.report.stop_reason, StopReason::Certified);
        assert_eq!(out.report.outer_iters, 1);
        assert_eq!(calls, 1);
    }

    #[test]
    fn invalid_config_rejected() {
        let spec = ProblemSpec::new(Matrix::from_element(1, 1, 2.0), 0.5).unwrap();
        let mut cfg = PrimalConfig::for_theta(0.5);
        cfg.eps = 0.0;
        assert!(primal_solve(&spec, &cfg, None).is_err());
    }
}

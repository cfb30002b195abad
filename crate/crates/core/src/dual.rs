//! Dual proximal point method with an accelerated proximal gradient inner
//! solver.
//!
//! Outer loop (augmented-Lagrangian form):
//!
//! ```text
//! X^k     ≈ argmin_X ‖X₁‖_* + θ‖X₂‖₁ + Ψ_λk(X; y^k)
//! y^{k+1} = y^k + λ_k (b − 𝒜(X^k))
//! Ψ_λ(X; y) = (1/2λ)‖y + λ(b − 𝒜(X))‖²
//! ```
//!
//! The dual cone of `{0} × {0}` is the whole space, so no projection appears.

use std::time::Instant;

use crate::error::{mismatch, Result};
use crate::linalg::{self, Matrix};
use crate::problem::{apply_map, DualPoint, PairedVariable, ProblemSpec};
use crate::solver::{inner_tolerance, validate_schedule, Algorithm, Certifier, SolveReport, StopReason};

#[derive(Debug, Clone, PartialEq)]
pub struct DualConfig {
    pub lambda0: f64,
    pub lambda_growth: f64,
    pub lambda_max: f64,
    pub eps: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    /// Scale of the gradient-mapping tolerance `min(0.1, k^-1.5) · inner_tol`.
    pub inner_tol: f64,
    pub cert_cadence: usize,
}

impl DualConfig {
    pub fn for_theta(theta: f64) -> Self {
        Self {
            lambda0: 1.0 / theta,
            lambda_growth: 1.2,
            lambda_max: 1e4 / theta,
            eps: 1e-6,
            max_outer: 1000,
            max_inner: 30,
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

/// Multiplier `y + λ(b − 𝒜(X))` after the (identity) dual-cone projection.
fn check_shapes(spec: &ProblemSpec, x: &PairedVariable, y: &DualPoint) -> Result<()> {
    for shape in [x.x1.shape(), x.x2.shape(), y.shape()] {
        if shape != spec.shape() {
            return Err(mismatch(spec.shape(), shape));
        }
    }
    Ok(())
}

/// First component of `y + λ(b − 𝒜(X))`.
fn shifted_scalar(spec: &ProblemSpec, x: &PairedVariable, y: &DualPoint, lambda: f64) -> f64 {
    let ax: f64 = spec.a().as_slice().iter().zip(x.x1.as_slice()).map(|(a, b)| a * b).sum();
    y.z1 + lambda * (1.0 - ax)
}

/// `x + s·d`.
fn axpy(x: &Matrix, s: f64, d: &Matrix) -> Matrix {
    let v = x.as_slice().iter().zip(d.as_slice()).map(|(a, b)| a + s * b).collect();
    Matrix::from_vec(x.nrows(), x.ncols(), v)
}

/// `cur + β(cur − prev)`.
fn extrapolate(cur: &Matrix, prev: &Matrix, beta: f64) -> Matrix {
    let v = cur.as_slice().iter().zip(prev.as_slice()).map(|(a, b)| a + beta * (a - b)).collect();
    Matrix::from_vec(cur.nrows(), cur.ncols(), v)
}

/// `Ψ_λ(X; y)`.
pub fn psi_value(spec: &ProblemSpec, x: &PairedVariable, y: &DualPoint, lambda: f64) -> Result<f64> {
    check_shapes(spec, x, y)?;
    let w1 = shifted_scalar(spec, x, y, lambda);
    let w2: f64 = y
        .z2
        .as_slice()
        .iter()
        .zip(x.x1.as_slice().iter().zip(x.x2.as_slice()))
        .map(|(yz, (a, b))| {
            let w = yz - lambda * (a - b);
            w * w
        })
        .sum();
    Ok((w1 * w1 + w2) / (2.0 * lambda))
}

/// `∇_XΨ_λ(X; y) = −𝒜*(y + λ(b − 𝒜(X)))`.
pub fn psi_gradient(spec: &ProblemSpec, x: &PairedVariable, y: &DualPoint, lambda: f64) -> Result<PairedVariable> {
    check_shapes(spec, x, y)?;
    let w1 = shifted_scalar(spec, x, y, lambda);
    let (r, c) = spec.shape();
    let g2: Vec<f64> = y
        .z2
        .as_slice()
        .iter()
        .zip(x.x1.as_slice().iter().zip(x.x2.as_slice()))
        .map(|(yz, (a, b))| yz - lambda * (a - b))
        .collect();
    let g1: Vec<f64> = g2.iter().zip(spec.a().as_slice()).map(|(g, a)| -(g + w1 * a)).collect();
    Ok(PairedVariable {
        x1: Matrix::from_vec(r, c, g1),
        x2: Matrix::from_vec(r, c, g2),
    })
}

/// Minimizer of the quadratic model `Q_t(·; Y)` and its nonsmooth part.
#[derive(Debug, Clone)]
pub struct ProxStep {
    pub x: PairedVariable,
    /// `‖S₁‖_* + θ‖S₂‖₁`.
    pub penalty: f64,
}

fn prox_step_from_gradient(spec: &ProblemSpec, y_point: &PairedVariable, grad: &PairedVariable, t: f64) -> Result<ProxStep> {
    let g1 = axpy(&y_point.x1, -1.0 / t, &grad.x1);
    let g2 = axpy(&y_point.x2, -1.0 / t, &grad.x2);
    let s1 = linalg::shrink_singular_values(&g1, 1.0 / t)?;
    let s2 = linalg::prox_l1(&g2, spec.theta() / t);
    let penalty = s1.nuclear_norm + spec.theta() * linalg::l1_norm(&s2);
    Ok(ProxStep {
        x: PairedVariable { x1: s1.matrix, x2: s2 },
        penalty,
    })
}

/// `S_t(Y) = (p⁽¹⁾_{1/t}(G¹_t(Y)), p⁽²⁾_{θ/t}(G²_t(Y)))`, `G_t(Y) = Y − ∇f(Y)/t`,
/// where `f = Ψ_λ(·; y)`.
pub fn apg_prox_step(
    spec: &ProblemSpec,
    y_point: &PairedVariable,
    t: f64,
    lambda: f64,
    y: &DualPoint,
) -> Result<PairedVariable> {
    let grad = psi_gradient(spec, y_point, y, lambda)?;
    Ok(prox_step_from_gradient(spec, y_point, &grad, t)?.x)
}

/// `(⟨g, s − y⟩, ‖s − y‖²)` without forming the difference.
fn step_moments(g: &PairedVariable, s: &PairedVariable, y: &PairedVariable) -> (f64, f64) {
    let mut lin = 0.0;
    let mut sq = 0.0;
    for (gm, sm, ym) in [(&g.x1, &s.x1, &y.x1), (&g.x2, &s.x2, &y.x2)] {
        for ((gv, sv), yv) in gm.as_slice().iter().zip(sm.as_slice()).zip(ym.as_slice()) {
            let d = sv - yv;
            lin += gv * d;
            sq += d * d;
        }
    }
    (lin, sq)
}

/// Momentum and curvature state of one APG run.
#[derive(Debug, Clone)]
pub struct ApgState {
    pub x_cur: PairedVariable,
    pub x_prev: PairedVariable,
    pub tau_cur: f64,
    pub tau_prev: f64,
    pub t: f64,
    pub lipschitz: f64,
}

/// `τ_{k+1} = (1 + √(1 + 4τ_k²)) / 2`.
pub fn next_tau(tau: f64) -> f64 {
    0.5 * ((1.0 + 4.0 * tau * tau).sqrt() + 1.0)
}

const CURVATURE_SHRINK: f64 = 0.8;

/// Bookkeeping returned alongside the APG minimizer.
#[derive(Debug, Clone)]
pub struct ApgOutcome {
    pub x: PairedVariable,
    pub iterations: usize,
    /// Composite objective `P + f` at the returned point.
    pub objective: f64,
    /// `t‖Y − S_t(Y)‖` of the last step.
    pub gradient_mapping: f64,
    pub restarts: usize,
    pub state: ApgState,
    /// Composite objective after every iteration.
    pub trace: Vec<f64>,
    /// Largest `f(S) − Q_t(S; Y) + P(S)` over accepted steps; never positive
    /// beyond rounding.
    pub worst_majorization_gap: f64,
}

/// Accelerated proximal gradient on `‖X₁‖_* + θ‖X₂‖₁ + Ψ_λ(X; y)` from `warm`.
///
/// Curvature starts at `t = L` and is multiplied by 0.8 while the majorization
/// `f(S_t) ≤ f(Y) + ⟨∇f(Y), S_t − Y⟩ + (t/2)‖S_t − Y‖²` holds; after the first
/// failure `t` stays put (and grows back towards `L` only if the kept value
/// stops majorizing). An increase of the composite objective rejects the step
/// and restarts the momentum.
pub fn apg_solve(
    spec: &ProblemSpec,
    y: &DualPoint,
    lambda: f64,
    warm: &PairedVariable,
    tol: f64,
    max_iter: usize,
) -> Result<ApgOutcome> {
    if warm.shape() != spec.shape() {
        return Err(mismatch(spec.shape(), warm.shape()));
    }
    let lipschitz = spec.lipschitz(lambda);
    let mut st = ApgState {
        x_cur: warm.clone(),
        x_prev: warm.clone(),
        tau_cur: 1.0,
        tau_prev: 1.0,
        t: lipschitz,
        lipschitz,
    };
    let theta = spec.theta();
    let mut f_cur = linalg::nuclear_norm(&st.x_cur.x1)? + theta * linalg::l1_norm(&st.x_cur.x2) + psi_value(spec, &st.x_cur, y, lambda)?;
    let mut shrinking = true;
    let mut iterations = 0;
    let mut restarts = 0;
    let mut gradient_mapping = f64::INFINITY;
    let mut trace = Vec::with_capacity(max_iter);
    let mut worst_gap = f64::NEG_INFINITY;

    while iterations < max_iter {
        iterations += 1;
        let beta = (st.tau_prev - 1.0) / st.tau_cur;
        let y_point = if beta == 0.0 {
            st.x_cur.clone()
        } else {
            PairedVariable {
                x1: extrapolate(&st.x_cur.x1, &st.x_prev.x1, beta),
                x2: extrapolate(&st.x_cur.x2, &st.x_prev.x2, beta),
            }
        };
        let f_y = psi_value(spec, &y_point, y, lambda)?;
        let grad = psi_gradient(spec, &y_point, y, lambda)?;

        let majorizes = |s: &PairedVariable, t: f64| -> Result<(bool, f64)> {
            let (lin, sq) = step_moments(&grad, s, &y_point);
            let f_s = psi_value(spec, s, y, lambda)?;
            let model = f_y + lin + 0.5 * t * sq;
            let slack = 1e-12 * (1.0 + f_y.abs());
            Ok((f_s <= model + slack, f_s - model))
        };

        let mut accepted: Option<(ProxStep, f64, f64)> = None;
        if shrinking {
            let t_try = CURVATURE_SHRINK * st.t;
            let step = prox_step_from_gradient(spec, &y_point, &grad, t_try)?;
            let (ok, gap) = majorizes(&step.x, t_try)?;
            if ok {
                accepted = Some((step, t_try, gap));
            } else {
                shrinking = false;
            }
        }
        let (step, t_used, gap) = match accepted {
            Some(a) => a,
            None => {
                let mut t = st.t;
                loop {
                    let step = prox_step_from_gradient(spec, &y_point, &grad, t)?;
                    let (ok, gap) = majorizes(&step.x, t)?;
                    if ok || t >= st.lipschitz {
                        break (step, t, gap);
                    }
                    t = (t / CURVATURE_SHRINK).min(st.lipschitz);
                }
            }
        };
        st.t = t_used;
        worst_gap = worst_gap.max(gap);
        gradient_mapping = t_used * step_moments(&grad, &step.x, &y_point).1.sqrt();

        let f_new = step.penalty + psi_value(spec, &step.x, y, lambda)?;
        if f_new > f_cur && beta != 0.0 {
            // Momentum overshot: drop it and retry from the current point.
            st.x_prev = st.x_cur.clone();
            st.tau_cur = 1.0;
            st.tau_prev = 1.0;
            restarts += 1;
            trace.push(f_cur);
            continue;
        }
        st.x_prev = std::mem::replace(&mut st.x_cur, step.x);
        st.tau_prev = st.tau_cur;
        st.tau_cur = next_tau(st.tau_cur);
        f_cur = f_new;
        trace.push(f_cur);
        if gradient_mapping <= tol {
            break;
        }
    }
    Ok(ApgOutcome {
        x: st.x_cur.clone(),
        iterations,
        objective: f_cur,
        gradient_mapping,
        restarts,
        state: st,
        trace,
        worst_majorization_gap: worst_gap,
    })
}

#[derive(Debug, Clone)]
pub struct DualState {
    pub y: DualPoint,
    pub x: PairedVariable,
    pub lambda: f64,
    pub outer_iter: usize,
    pub inner_iter_total: usize,
    /// `‖(y^k − y^{k+1}) / λ_k‖ = ‖b − 𝒜(X^k)‖`.
    pub residual: f64,
    /// Gradient-mapping norm of the last inner run.
    pub inner_gap: f64,
}

impl DualState {
    pub fn initial(spec: &ProblemSpec, cfg: &DualConfig) -> Self {
        let (m, n) = spec.shape();
        Self {
            y: DualPoint::zeros(m, n),
            x: PairedVariable::zeros(m, n),
            lambda: cfg.lambda0,
            outer_iter: 0,
            inner_iter_total: 0,
            residual: f64::INFINITY,
            inner_gap: f64::INFINITY,
        }
    }
}

/// Multiplier update `y^{k+1} = y^k + λ_k(b − 𝒜(X^k))` for the `X` held in
/// `state`, followed by the λ schedule.
pub fn dual_step(spec: &ProblemSpec, state: &DualState, cfg: &DualConfig) -> Result<DualState> {
    let resid = &spec.b() - &apply_map(spec, &state.x)?;
    let y = &state.y + &(&resid * state.lambda);
    Ok(DualState {
        y,
        x: state.x.clone(),
        lambda: (state.lambda * cfg.lambda_growth).min(cfg.lambda_max),
        outer_iter: state.outer_iter,
        inner_iter_total: state.inner_iter_total,
        residual: resid.norm(),
        inner_gap: state.inner_gap,
    })
}

#[derive(Debug, Clone)]
pub struct DualOutcome {
    pub x: PairedVariable,
    pub state: DualState,
    pub report: SolveReport,
}

/// Runs the dual method from `y⁰ = 0`, `X⁰ = 0`, warm-starting every APG run
/// from the previous inner minimizer.
///
/// λ is held fixed after an APG run that used its whole budget without
/// bringing the gradient mapping below the feasibility residual, and the
/// residual stop also requires that gradient mapping to be below `eps`.
pub fn dual_solve(
    spec: &ProblemSpec,
    cfg: &DualConfig,
    mut certifier: Option<&mut dyn Certifier>,
) -> Result<DualOutcome> {
    cfg.validate()?;
    let start = Instant::now();
    let mut certify_seconds = 0.0;
    let mut certify_calls = 0;
    let mut state = DualState::initial(spec, cfg);
    let mut stop = StopReason::IterationCap;
    while state.outer_iter < cfg.max_outer {
        let k = state.outer_iter + 1;
        let tol = inner_tolerance(k, 1.5, cfg.inner_tol);
        let inner = apg_solve(spec, &state.y, state.lambda, &state.x, tol, cfg.max_inner)?;
        state.x = inner.x;
        state.inner_gap = inner.gradient_mapping;
        state.outer_iter = k;
        state.inner_iter_total += inner.iterations;
        let lambda = state.lambda;
        state = dual_step(spec, &state, cfg)?;
        if inner.iterations >= cfg.max_inner && state.inner_gap > state.residual {
            state.lambda = lambda;
        }
        // A small step in y only signals convergence when X^k actually
        // minimizes the augmented Lagrangian.
        if state.residual <= cfg.eps && state.inner_gap <= cfg.eps {
            stop = StopReason::Residual;
            break;
        }
        if let Some(c) = certifier.as_deref_mut() {
            if k.is_multiple_of(cfg.cert_cadence) {
                let t = Instant::now();
                let ok = c.check(spec, &state.x, state.y.z1);
                certify_seconds += t.elapsed().as_secs_f64();
                certify_calls += 1;
                if ok {
                    stop = StopReason::Certified;
                    break;
                }
            }
        }
    }
    let report = SolveReport {
        algorithm: Algorithm::Dual,
        outer_iters: state.outer_iter,
        inner_iters_total: state.inner_iter_total,
        wall_seconds: start.elapsed().as_secs_f64(),
        certify_seconds,
        certify_calls,
        certified: stop == StopReason::Certified,
        stop_reason: stop,
        objective: spec.objective(&state.x)?,
        residual: state.residual,
        multiplier: state.y.z1,
    };
    Ok(DualOutcome {
        x: state.x.clone(),
        state,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_mat(rng: &mut ChaCha8Rng, m: usize, n: usize, lo: f64, hi: f64) -> Matrix {
        Matrix::from_fn(m, n, |_, _| rng.gen_range(lo..hi))
    }

    #[test]
    fn psi_examples() {
        let spec = ProblemSpec::new(Matrix::from_element(2, 2, 1.0), 0.3).unwrap();
        let zero = PairedVariable::zeros(2, 2);
        let y0 = DualPoint::zeros(2, 2);
        assert!((psi_value(&spec, &zero, &y0, 2.5).unwrap() - 1.25).abs() < 1e-15);
        let g = psi_gradient(&spec, &zero, &y0, 2.5).unwrap();
        assert_eq!(g.x1, spec.a() * -2.5);
        assert_eq!(g.x2, Matrix::zeros(2, 2));
        let quarter = Matrix::from_element(2, 2, 0.25);
        let feasible = PairedVariable::new(quarter.clone(), quarter).unwrap();
        assert!(psi_value(&spec, &feasible, &y0, 2.5).unwrap().abs() < 1e-30);
    }

    #[test]
    fn psi_matches_explicit_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let spec = ProblemSpec::new(rand_mat(&mut rng, 3, 4, 0.0, 1.0), 0.7).unwrap();
        for _ in 0..20 {
            let x = PairedVariable {
                x1: rand_mat(&mut rng, 3, 4, -1.0, 1.0),
                x2: rand_mat(&mut rng, 3, 4, -1.0, 1.0),
            };
            let y = DualPoint {
                z1: rng.gen_range(-1.0..1.0),
                z2: rand_mat(&mut rng, 3, 4, -1.0, 1.0),
            };
            let lam = rng.gen_range(0.1..5.0);
            let mut first = y.z1 + lam * 1.0;
            for i in 0..3 {
                for j in 0..4 {
                    first -= lam * spec.a()[(i, j)] * x.x1[(i, j)];
                }
            }
            let mut acc = first * first;
            for i in 0..3 {
                for j in 0..4 {
                    let e = y.z2[(i, j)] - lam * (x.x1[(i, j)] - x.x2[(i, j)]);
                    acc += e * e;
                }
            }
            let want = acc / (2.0 * lam);
            let got = psi_value(&spec, &x, &y, lam).unwrap();
            assert!((want - got).abs() <= 1e-12 * want.max(1.0));
        }
    }

    #[test]
    fn tau_sequence() {
        let t1 = next_tau(1.0);
        assert!((t1 - 1.618_033_988_7).abs() < 1e-10);
        let mut tau = 1.0;
        for _ in 0..50 {
            let n = next_tau(tau);
            assert!((n * n - n - tau * tau).abs() <= 1e-9 * tau * tau);
            assert!(n >= 1.0);
            tau = n;
        }
    }

    #[test]
    fn prox_step_limits() {
        let spec = ProblemSpec::new(Matrix::from_element(2, 2, 1.0), 0.3).unwrap();
        // Feasible Y with y = 0 has ∇f(Y) = 0, so S_t only shrinks.
        let quarter = Matrix::from_element(2, 2, 0.25);
        let yp = PairedVariable::new(quarter.clone(), quarter.clone()).unwrap();
        let y = DualPoint::zeros(2, 2);
        let t = 10.0;
        let s = apg_prox_step(&spec, &yp, t, 1.0, &y).unwrap();
        // σ(Y₁) = 0.5 → 0.4; entries 0.25 → 0.22.
        assert!((&s.x1 - Matrix::from_element(2, 2, 0.2)).abs().max() < 1e-14);
        assert!((&s.x2 - Matrix::from_element(2, 2, 0.22)).abs().max() < 1e-14);

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let big = PairedVariable {
            x1: rand_mat(&mut rng, 2, 2, -1.0, 1.0),
            x2: rand_mat(&mut rng, 2, 2, -1.0, 1.0),
        };
        let yr = DualPoint {
            z1: 0.3,
            z2: rand_mat(&mut rng, 2, 2, -1.0, 1.0),
        };
        let s = apg_prox_step(&spec, &big, 1e12, 1.0, &yr).unwrap();
        assert!((&s - &big).norm() <= 1e-6 * big.norm());
    }

    #[test]
    fn dual_step_examples() {
        let spec = ProblemSpec::new(Matrix::from_element(2, 2, 1.0), 0.3).unwrap();
        let cfg = DualConfig::for_theta(0.3);
        let st = DualState::initial(&spec, &cfg);
        let next = dual_step(&spec, &st, &cfg).unwrap();
        assert_eq!(next.y, &spec.b() * cfg.lambda0);
        assert_eq!(next.residual, 1.0);

        let quarter = Matrix::from_element(2, 2, 0.25);
        let mut st = DualState::initial(&spec, &cfg);
        st.x = PairedVariable::new(quarter.clone(), quarter).unwrap();
        st.y.z1 = 0.8;
        let next = dual_step(&spec, &st, &cfg).unwrap();
        assert_eq!(next.y, st.y);
        assert_eq!(next.residual, 0.0);
    }

    #[test]
    fn apg_is_monotone_and_majorizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let spec = ProblemSpec::new(rand_mat(&mut rng, 5, 4, 0.0, 1.0), 0.4).unwrap();
        let y = DualPoint {
            z1: 0.5,
            z2: rand_mat(&mut rng, 5, 4, -0.2, 0.2),
        };
        let out = apg_solve(&spec, &y, 2.0, &PairedVariable::zeros(5, 4), 0.0, 300).unwrap();
        assert!(out.worst_majorization_gap <= 1e-10);
        for w in out.trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
        assert!(out.state.tau_cur >= 1.0);
        assert!(out.state.t <= out.state.lipschitz * (1.0 + 1e-15));
    }

    #[test]
    fn scalar_solve() {
        let spec = ProblemSpec::new(Matrix::from_element(1, 1, 2.0), 0.5).unwrap();
        let out = dual_solve(&spec, &DualConfig::for_theta(0.5), None).unwrap();
        assert_eq!(out.report.stop_reason, StopReason::Residual);
        assert!((out.x.x1[(0, 0)] - 0.5).abs() < 1e-6);
        assert!((out.x.x2[(0, 0)] - 0.5).abs() < 1e-6);
        assert!((out.report.objective - 0.75).abs() < 1e-6);
    }

    #[test]
    fn all_ones_solve() {
        let spec = ProblemSpec::new(Matrix::from_element(2, 2, 1.0), 0.3).unwrap();
        let out = dual_solve(&spec, &DualConfig::for_theta(0.3), None).unwrap();
        assert!(out.report.stop_reason.converged());
        assert!((out.report.objective - 0.8).abs() < 1e-6);
        let quarter = Matrix::from_element(2, 2, 0.25);
        assert!((&out.x.x1 - &quarter).abs().max() < 1e-6);
        assert!((&out.x.x2 - &quarter).abs().max() < 1e-6);
    }
}

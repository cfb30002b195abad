//! Optimality certificate for rank-one solutions.
//!
//! Given an approximate solution `X`, guess the support `M × N` of the
//! rank-one optimum, refine `(λ, u₁, v₁)` with Newton's method on
//!
//! ```text
//! P(x) = ((λA₁₁ − θE)v₁ − u₁; (λA₁₁ − θE)ᵀu₁ − v₁; u₁ᵀu₁ − 1) = 0,
//! ```
//!
//! bound the distance to the exact root with the Kantorovich theorem, and then
//! look for a dual matrix `W` with small spectral norm by projected
//! subgradient descent. Blocks are indexed in the permuted frame where the
//! support occupies the upper-left corner.

use serde::Serialize;

use crate::error::{mismatch, Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::problem::{PairedVariable, ProblemSpec};
use crate::solver::Certifier;

/// Default relative threshold used to read the support off `X₂`.
pub const SUPPORT_THRESHOLD: f64 = 1e-6;

/// Rows `M` and columns `N` of a rank-one block, plus the permutations that
/// move it to the upper-left corner.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SupportPattern {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    /// `row_perm[i]` is the original row placed at position `i`.
    pub row_perm: Vec<usize>,
    pub col_perm: Vec<usize>,
}

impl SupportPattern {
    /// Builds the pattern for `rows × cols` inside an `m × n` matrix.
    pub fn new(mut rows: Vec<usize>, mut cols: Vec<usize>, m: usize, n: usize) -> Result<Self> {
        rows.sort_unstable();
        rows.dedup();
        cols.sort_unstable();
        cols.dedup();
        if rows.is_empty() || cols.is_empty() {
            return Err(Error::EmptySupport);
        }
        if rows.last().is_some_and(|&r| r >= m) || cols.last().is_some_and(|&c| c >= n) {
            return Err(Error::DimensionMismatch {
                expected: format!("indices below {m}x{n}"),
                got: format!("row {:?}, col {:?}", rows.last(), cols.last()),
            });
        }
        let row_perm = complete_perm(&rows, m);
        let col_perm = complete_perm(&cols, n);
        Ok(Self {
            rows,
            cols,
            row_perm,
            col_perm,
        })
    }

    /// `|M| · |N|`.
    pub fn size(&self) -> usize {
        self.rows.len() * self.cols.len()
    }

    /// `a` with rows and columns reordered so the support comes first.
    pub fn permute(&self, a: &Matrix) -> Matrix {
        Matrix::from_fn(self.row_perm.len(), self.col_perm.len(), |i, j| {
            a[(self.row_perm[i], self.col_perm[j])]
        })
    }

    /// Inverse of [`SupportPattern::permute`].
    pub fn unpermute(&self, p: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(p.nrows(), p.ncols());
        for (i, &r) in self.row_perm.iter().enumerate() {
            for (j, &c) in self.col_perm.iter().enumerate() {
                out[(r, c)] = p[(i, j)];
            }
        }
        out
    }
}

fn complete_perm(head: &[usize], len: usize) -> Vec<usize> {
    let mut seen = vec![false; len];
    for &i in head {
        seen[i] = true;
    }
    let mut perm = head.to_vec();
    perm.extend((0..len).filter(|&i| !seen[i]));
    perm
}

/// Rows and columns of `x2` holding an entry above `threshold · ‖X₂‖_∞`.
pub fn extract_support(x2: &Matrix, threshold: f64) -> Result<SupportPattern> {
    if !(threshold > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "support threshold must be positive, got {threshold}"
        )));
    }
    let scale = linalg::max_abs(x2);
    if !(scale > 0.0) {
        return Err(Error::EmptySupport);
    }
    let cut = threshold * scale;
    let rows = (0..x2.nrows())
        .filter(|&i| x2.row(i).iter().any(|v| v.abs() > cut))
        .collect();
    let cols = (0..x2.ncols())
        .filter(|&j| x2.column(j).iter().any(|v| v.abs() > cut))
        .collect();
    SupportPattern::new(rows, cols, x2.nrows(), x2.ncols())
}

/// `(λ, u₁, v₁)` together with a bound `eps` on its distance to an exact
/// root of the Newton system.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateTriple {
    pub lambda: f64,
    pub u1: Vec<f64>,
    pub v1: Vec<f64>,
    pub eps: f64,
}

impl CandidateTriple {
    pub fn new(lambda: f64, u1: Vector, v1: Vector) -> Self {
        Self {
            lambda,
            u1: u1.as_slice().to_vec(),
            v1: v1.as_slice().to_vec(),
            eps: f64::INFINITY,
        }
    }

    /// Stacked vector `(λ, u₁, v₁)`.
    pub fn stacked(&self) -> Vector {
        let mut x = Vector::zeros(1 + self.u1.len() + self.v1.len());
        x[0] = self.lambda;
        for (i, u) in self.u1.iter().enumerate() {
            x[1 + i] = *u;
        }
        for (j, v) in self.v1.iter().enumerate() {
            x[1 + self.u1.len() + j] = *v;
        }
        x
    }

    /// Inverse of [`stacked`](Self::stacked); `mm` is the length of `u₁`.
    pub fn from_stacked(x: &Vector, mm: usize) -> Self {
        Self {
            lambda: x[0],
            u1: x.as_slice()[1..1 + mm].to_vec(),
            v1: x.as_slice()[1 + mm..].to_vec(),
            eps: f64::INFINITY,
        }
    }

    /// `σ₁` such that `X₁ = σ₁ u₁v₁ᵀ` satisfies `⟨A₁₁, X₁⟩ = 1`.
    pub fn sigma(&self, a11: &Matrix) -> f64 {
        let u = Vector::from_column_slice(&self.u1);
        let v = Vector::from_column_slice(&self.v1);
        1.0 / u.dot(&(a11 * v))
    }
}

fn check_triple(a11: &Matrix, x: &CandidateTriple) -> Result<()> {
    if x.u1.len() != a11.nrows() || x.v1.len() != a11.ncols() {
        return Err(mismatch(a11.shape(), (x.u1.len(), x.v1.len())));
    }
    Ok(())
}

/// `λA₁₁ − θE`.
fn shifted_block(a11: &Matrix, theta: f64, lambda: f64) -> Matrix {
    a11.map(|a| lambda * a - theta)
}

/// Residual `P(x)` of the Newton system, ordered `(rows of u₁; rows of v₁; norm)`.
pub fn newton_residual(a11: &Matrix, theta: f64, x: &CandidateTriple) -> Result<Vector> {
    check_triple(a11, x)?;
    let (mm, nn) = a11.shape();
    let b = shifted_block(a11, theta, x.lambda);
    let u = Vector::from_column_slice(&x.u1);
    let v = Vector::from_column_slice(&x.v1);
    let top = &b * &v - &u;
    let mid = b.tr_mul(&u) - &v;
    let mut p = Vector::zeros(mm + nn + 1);
    p.rows_mut(0, mm).copy_from(&top);
    p.rows_mut(mm, nn).copy_from(&mid);
    p[mm + nn] = u.norm_squared() - 1.0;
    Ok(p)
}

/// Jacobian `P′(x)`, columns ordered `(λ, u₁, v₁)`.
pub fn newton_jacobian(a11: &Matrix, theta: f64, x: &CandidateTriple) -> Result<Matrix> {
    check_triple(a11, x)?;
    let (mm, nn) = a11.shape();
    let d = mm + nn + 1;
    let b = shifted_block(a11, theta, x.lambda);
    let u = Vector::from_column_slice(&x.u1);
    let v = Vector::from_column_slice(&x.v1);
    let mut j = Matrix::zeros(d, d);
    j.view_mut((0, 0), (mm, 1)).copy_from(&(a11 * &v));
    j.view_mut((mm, 0), (nn, 1)).copy_from(&a11.tr_mul(&u));
    for i in 0..mm {
        j[(i, 1 + i)] = -1.0;
        j[(mm + nn, 1 + i)] = 2.0 * u[i];
    }
    j.view_mut((mm, 1), (nn, mm)).copy_from(&b.transpose());
    j.view_mut((0, 1 + mm), (mm, nn)).copy_from(&b);
    for k in 0..nn {
        j[(mm + k, 1 + mm + k)] = -1.0;
    }
    Ok(j)
}

/// Analytic Lipschitz constant of the affine map `x ↦ P′(x)`.
pub fn jacobian_lipschitz(a11: &Matrix) -> Result<f64> {
    let a = if a11.iter().all(|x| *x == 0.0) {
        0.0
    } else {
        linalg::spectral_norm(a11)?
    };
    Ok(2.0 * (a * a + 1.0).sqrt())
}

/// Constants of the Kantorovich theorem at one point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KantorovichReport {
    /// `‖P′(x₀)⁻¹‖₂`.
    pub b: f64,
    /// `‖P′(x₀)⁻¹P(x₀)‖`.
    pub eta: f64,
    pub k: f64,
    pub h: f64,
    /// Radius of the ball around `x₀` containing a root; `None` unless passed.
    pub t_star: Option<f64>,
    pub passed: bool,
}

/// `P′(x)` in factored form. With `B = λA₁₁ − θE`, `g = A₁₁v₁` and
/// `h = A₁₁ᵀu₁` the Jacobian is
///
/// ```text
/// [ g   −I    B ]
/// [ h   Bᵀ   −I ]
/// [ 0   2u₁ᵀ  0 ]
/// ```
///
/// Eliminating the `u₁` block leaves an `(|N|+1)`-dimensional system, and
/// `JᵀJ` equals the identity off `span{e_λ} ⊕ span{g, u₁, B} ⊕ ℝ^N`.
struct NewtonSystem {
    b: Matrix,
    g: Vector,
    h: Vector,
    u: Vector,
}

impl NewtonSystem {
    fn new(a11: &Matrix, theta: f64, x: &CandidateTriple) -> Self {
        let u = Vector::from_column_slice(&x.u1);
        let v = Vector::from_column_slice(&x.v1);
        Self {
            b: shifted_block(a11, theta, x.lambda),
            g: a11 * &v,
            h: a11.transpose() * &u,
            u,
        }
    }

    /// Solves `J s = p`; `SingularJacobian` if the reduced system is singular.
    fn solve(&self, p: &Vector) -> Result<Vector> {
        let (mm, nn) = self.b.shape();
        let p1 = p.rows(0, mm).into_owned();
        let p2 = p.rows(mm, nn).into_owned();
        let p3 = p[mm + nn];
        let bt = self.b.transpose();
        let mut r = Matrix::zeros(nn + 1, nn + 1);
        r.view_mut((0, 0), (nn, 1)).copy_from(&(&self.h + &bt * &self.g));
        let mut btb = &bt * &self.b;
        for k in 0..nn {
            btb[(k, k)] -= 1.0;
        }
        r.view_mut((0, 1), (nn, nn)).copy_from(&btb);
        r[(nn, 0)] = 2.0 * self.u.dot(&self.g);
        r.view_mut((nn, 1), (1, nn)).copy_from(&(self.u.transpose() * &self.b * 2.0));
        let mut rhs = Vector::zeros(nn + 1);
        rhs.rows_mut(0, nn).copy_from(&(&p2 + &bt * &p1));
        rhs[nn] = p3 + 2.0 * self.u.dot(&p1);
        let red = r.lu().solve(&rhs).ok_or(Error::SingularJacobian)?;
        let dl = red[0];
        let dv = red.rows(1, nn).into_owned();
        let du = &self.g * dl + &self.b * &dv - &p1;
        let mut step = Vector::zeros(mm + nn + 1);
        step[0] = dl;
        step.rows_mut(1, mm).copy_from(&du);
        step.rows_mut(1 + mm, nn).copy_from(&dv);
        if step.iter().all(|x| x.is_finite()) {
            Ok(step)
        } else {
            Err(Error::SingularJacobian)
        }
    }

    /// `‖J⁻¹‖₂`, from the singular values of `J` on the subspace where `JᵀJ`
    /// differs from the identity.
    fn inverse_norm(&self) -> Result<f64> {
        let (mm, nn) = self.b.shape();
        let mut span = Matrix::zeros(mm, nn + 2);
        span.set_column(0, &self.g);
        span.set_column(1, &self.u);
        span.view_mut((0, 2), (mm, nn)).copy_from(&self.b);
        let q = span.qr().q();
        let k = q.ncols();
        let d = mm + nn + 1;
        let mut js = Matrix::zeros(d, 1 + k + nn);
        js.view_mut((0, 0), (mm, 1)).copy_from(&self.g);
        js.view_mut((mm, 0), (nn, 1)).copy_from(&self.h);
        js.view_mut((0, 1), (mm, k)).copy_from(&(-&q));
        js.view_mut((mm, 1), (nn, k)).copy_from(&(self.b.transpose() * &q));
        js.view_mut((mm + nn, 1), (1, k)).copy_from(&(self.u.transpose() * &q * 2.0));
        js.view_mut((0, 1 + k), (mm, nn)).copy_from(&self.b);
        for j in 0..nn {
            js[(mm + j, 1 + k + j)] = -1.0;
        }
        let sv = js.singular_values();
        let mut smax = sv.max();
        let mut smin = sv.min();
        if k < mm {
            smax = smax.max(1.0);
            smin = smin.min(1.0);
        }
        if !(smin > smax * 1e-14) || !smin.is_finite() {
            return Err(Error::SingularJacobian);
        }
        Ok(1.0 / smin)
    }
}

fn kantorovich_from(p_step: &Vector, b: f64, k: f64) -> KantorovichReport {
    let eta = p_step.norm();
    let h = b * k * eta;
    let passed = h <= 0.5;
    let t_star = passed.then(|| if h == 0.0 { 0.0 } else { (1.0 - (1.0 - 2.0 * h).sqrt()) / h * eta });
    KantorovichReport {
        b,
        eta,
        k,
        h,
        t_star,
        passed,
    }
}

pub fn kantorovich_check(a11: &Matrix, theta: f64, x0: &CandidateTriple) -> Result<KantorovichReport> {
    let p = newton_residual(a11, theta, x0)?;
    let sys = NewtonSystem::new(a11, theta, x0);
    let b = sys.inverse_norm()?;
    let step = sys.solve(&p)?;
    Ok(kantorovich_from(&step, b, jacobian_lipschitz(a11)?))
}

/// Bookkeeping of a Newton run.
#[derive(Debug, Clone, Serialize)]
pub struct NewtonOutcome {
    pub triple: CandidateTriple,
    pub iterations: usize,
    pub residual: f64,
    /// Kantorovich constants at the returned point.
    pub kantorovich: KantorovichReport,
}

/// Newton's method from `x0` until `‖P(x)‖ ≤ eps_s`.
///
/// The returned triple has `eps` set to the Kantorovich radius at the final
/// point when the test passes there, and to the length of the last step
/// otherwise.
pub fn newton_solve(
    a11: &Matrix,
    theta: f64,
    x0: &CandidateTriple,
    eps_s: f64,
    max_iter: usize,
) -> Result<NewtonOutcome> {
    check_triple(a11, x0)?;
    let mm = a11.nrows();
    let k = jacobian_lipschitz(a11)?;
    let mut x = x0.stacked();
    let mut cur = x0.clone();
    let mut iterations = 0;
    let mut last_step = f64::INFINITY;
    loop {
        let p = newton_residual(a11, theta, &cur)?;
        let sys = NewtonSystem::new(a11, theta, &cur);
        let step = sys.solve(&p)?;
        let pn = p.norm();
        if pn <= eps_s {
            let b = sys.inverse_norm()?;
            let kant = kantorovich_from(&step, b, k);
            cur.eps = kant.t_star.unwrap_or(if iterations == 0 { step.norm() } else { last_step });
            return Ok(NewtonOutcome {
                triple: cur,
                iterations,
                residual: pn,
                kantorovich: kant,
            });
        }
        if iterations >= max_iter || !pn.is_finite() {
            return Err(Error::NoConvergence {
                iterations,
                residual: pn,
            });
        }
        x -= &step;
        last_step = step.norm();
        cur = CandidateTriple::from_stacked(&x, mm);
        iterations += 1;
    }
}

/// Euclidean projection of `w_bar` onto `{w : uᵀw = 0, lo ≤ w ≤ hi}`.
///
/// With `w(μ) = clip(w̄ − μu, lo, hi)` the map `μ ↦ uᵀw(μ)` is piecewise
/// linear and non-increasing; its root is located by a binary search over the
/// sorted breakpoints and then solved exactly on the bracketing piece.
pub fn knapsack_project(w_bar: &[f64], u: &[f64], lo: &[f64], hi: &[f64]) -> Result<Vec<f64>> {
    let n = w_bar.len();
    if u.len() != n || lo.len() != n || hi.len() != n {
        return Err(Error::DimensionMismatch {
            expected: format!("length {n}"),
            got: format!("{}, {}, {}", u.len(), lo.len(), hi.len()),
        });
    }
    if let Some(i) = (0..n).find(|&i| !(lo[i] <= hi[i])) {
        return Err(Error::InfeasibleBox(format!("lo[{i}] = {} > hi[{i}] = {}", lo[i], hi[i])));
    }
    let clip = |mu: f64| -> Vec<f64> { (0..n).map(|i| (w_bar[i] - mu * u[i]).clamp(lo[i], hi[i])).collect() };
    let g = |w: &[f64]| -> f64 { w.iter().zip(u).map(|(a, b)| a * b).sum() };

    let g_max: f64 = (0..n).map(|i| if u[i] > 0.0 { u[i] * hi[i] } else { u[i] * lo[i] }).sum();
    let g_min: f64 = (0..n).map(|i| if u[i] > 0.0 { u[i] * lo[i] } else { u[i] * hi[i] }).sum();
    let slack = 1e-12 * u.iter().zip(lo.iter().zip(hi)).map(|(a, (l, h))| a.abs() * l.abs().max(h.abs())).sum::<f64>();
    if g_max < -slack || g_min > slack {
        return Err(Error::InfeasibleBox(format!(
            "u^T w ranges over [{g_min}, {g_max}], which excludes 0"
        )));
    }

    let mut bps: Vec<f64> = Vec::with_capacity(2 * n);
    for i in 0..n {
        if u[i] != 0.0 {
            bps.push((w_bar[i] - lo[i]) / u[i]);
            bps.push((w_bar[i] - hi[i]) / u[i]);
        }
    }
    if bps.is_empty() {
        return Ok(clip(0.0));
    }
    bps.sort_by(f64::total_cmp);
    bps.dedup();

    // Largest breakpoint index with g ≥ 0; g is non-increasing in μ.
    let g_at = |mu: f64| g(&clip(mu));
    if g_at(bps[0]) < 0.0 {
        return Ok(clip(bps[0]));
    }
    let last = bps.len() - 1;
    if g_at(bps[last]) >= 0.0 {
        return Ok(clip(bps[last]));
    }
    let (mut lo_i, mut hi_i) = (0usize, last);
    while hi_i - lo_i > 1 {
        let mid = (lo_i + hi_i) / 2;
        if g_at(bps[mid]) >= 0.0 {
            lo_i = mid;
        } else {
            hi_i = mid;
        }
    }
    // On (bps[lo_i], bps[hi_i]) every coordinate is either clamped or free.
    let (a, b) = (bps[lo_i], bps[hi_i]);
    let probe = 0.5 * (a + b);
    let mut fixed = 0.0;
    let mut slope = 0.0;
    let mut base = 0.0;
    for i in 0..n {
        let raw = w_bar[i] - probe * u[i];
        if raw <= lo[i] {
            fixed += u[i] * lo[i];
        } else if raw >= hi[i] {
            fixed += u[i] * hi[i];
        } else {
            base += u[i] * w_bar[i];
            slope += u[i] * u[i];
        }
    }
    let mu = if slope > 0.0 { ((fixed + base) / slope).clamp(a, b) } else { a };
    Ok(clip(mu))
}

/// Everything the blockwise projection needs, in the permuted frame.
#[derive(Debug, Clone)]
pub struct CertificateData {
    pub lambda: f64,
    pub u1: Vector,
    pub v1: Vector,
    /// `A` with the support moved to the upper-left corner.
    pub a: Matrix,
    pub theta: f64,
    pub eps: f64,
}

impl CertificateData {
    fn blocks(&self) -> (usize, usize) {
        (self.u1.len(), self.v1.len())
    }

    fn block_inf(&self, r0: usize, c0: usize, nr: usize, nc: usize) -> f64 {
        if nr == 0 || nc == 0 {
            0.0
        } else {
            linalg::max_abs(&self.a.view((r0, c0), (nr, nc)).into_owned())
        }
    }

    /// Box radii `θ − (‖A₁₂‖_∞ + 5)ε` and `θ − (‖A₂₁‖_∞ + 5)ε`.
    pub fn radii(&self) -> (f64, f64) {
        let (mm, nn) = self.blocks();
        let (m, n) = self.a.shape();
        let r12 = self.theta - (self.block_inf(0, nn, mm, n - nn) + 5.0) * self.eps;
        let r21 = self.theta - (self.block_inf(mm, 0, m - mm, nn) + 5.0) * self.eps;
        (r12, r21)
    }

    /// Fixed `(1,1)` block `(λA₁₁ − θE) − u₁v₁ᵀ`.
    pub fn w11(&self) -> Matrix {
        let (mm, nn) = self.blocks();
        let a11 = self.a.view((0, 0), (mm, nn)).into_owned();
        shifted_block(&a11, self.theta, self.lambda) - &self.u1 * self.v1.transpose()
    }
}

/// Blockwise projection onto the feasible set of the `W` search problem.
pub fn project_certificate(w_bar: &Matrix, data: &CertificateData) -> Result<Matrix> {
    if w_bar.shape() != data.a.shape() {
        return Err(mismatch(data.a.shape(), w_bar.shape()));
    }
    let (mm, nn) = data.blocks();
    let (m, n) = data.a.shape();
    let (r12, r21) = data.radii();
    for r in [r12, r21] {
        if r < 0.0 {
            return Err(Error::InfeasibleMargins {
                theta: data.theta,
                slack: data.theta - r,
            });
        }
    }
    let lam = data.lambda;
    let mut w = Matrix::zeros(m, n);
    w.view_mut((0, 0), (mm, nn)).copy_from(&data.w11());

    for i in mm..m {
        for j in nn..n {
            let c = lam * data.a[(i, j)];
            w[(i, j)] = w_bar[(i, j)].min(c + data.theta).max(c - data.theta);
        }
    }

    let u = data.u1.as_slice();
    for j in nn..n {
        let col: Vec<f64> = (0..mm).map(|i| w_bar[(i, j)]).collect();
        let lo: Vec<f64> = (0..mm).map(|i| lam * data.a[(i, j)] - r12).collect();
        let hi: Vec<f64> = (0..mm).map(|i| lam * data.a[(i, j)] + r12).collect();
        let p = knapsack_project(&col, u, &lo, &hi)?;
        for i in 0..mm {
            w[(i, j)] = p[i];
        }
    }

    let v = data.v1.as_slice();
    for i in mm..m {
        let row: Vec<f64> = (0..nn).map(|j| w_bar[(i, j)]).collect();
        let lo: Vec<f64> = (0..nn).map(|j| lam * data.a[(i, j)] - r21).collect();
        let hi: Vec<f64> = (0..nn).map(|j| lam * data.a[(i, j)] + r21).collect();
        let p = knapsack_project(&row, v, &lo, &hi)?;
        for j in 0..nn {
            w[(i, j)] = p[j];
        }
    }
    Ok(w)
}

/// `u vᵀ` for the top singular pair of `w`, a subgradient of `‖·‖₂` at `w`.
pub fn spectral_subgradient(w: &Matrix) -> Result<Matrix> {
    let (_, u, v) = linalg::top_singular_triple(w)?;
    Ok(u * v.transpose())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertifyConfig {
    pub eps_s: f64,
    pub newton_max_iter: usize,
    pub subgrad_max_iter: usize,
    pub support_threshold: f64,
    /// Stop when the best `‖W‖₂` improves by less than this over
    /// `stagnation_window` iterations.
    pub stagnation_tol: f64,
    pub stagnation_window: usize,
    pub step0: f64,
}

impl Default for CertifyConfig {
    fn default() -> Self {
        Self {
            eps_s: 1e-10,
            newton_max_iter: 50,
            subgrad_max_iter: 500,
            support_threshold: SUPPORT_THRESHOLD,
            stagnation_tol: 1e-9,
            stagnation_window: 50,
            step0: 0.1,
        }
    }
}

/// Why a certificate attempt stopped short.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CertifyFailure {
    EmptySupport,
    SingularJacobian,
    NewtonDiverged,
    /// The refined triple is not provably close to a root.
    Kantorovich,
    /// `ε ≥ ½` or `1 − (‖A‖₂ + 7.5)ε < 0`.
    RadiusTooLarge,
    InfeasibleMargins,
    /// Some margin stayed negative after the subgradient search.
    Margins,
}

/// Rounding allowance on each margin. It is far below the `5ε` of slack that
/// the box radii keep with `ε ≥ eps_s`.
pub const MARGIN_ROUNDING: f64 = 1e-12;

/// Slack of each sufficient condition; all nonnegative means certified.
///
/// Beyond the literal conditions, `(i)` also charges `ε` against the smallest
/// entry of `u₁` and `v₁` (the exact root must keep the sign pattern `E`), and
/// the residuals of `W₁₂ᵀu₁ = 0` and `W₂₁v₁ = 0` left by rounding are charged
/// against the box margins of `(ii)`, `(iii)` and against `(v)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Margins {
    pub i: f64,
    pub ii: f64,
    pub iii: f64,
    pub iv: f64,
    pub v: f64,
}

impl Margins {
    pub fn as_array(&self) -> [f64; 5] {
        [self.i, self.ii, self.iii, self.iv, self.v]
    }

    /// True when every margin is at least `-MARGIN_ROUNDING`.
    pub fn all_nonnegative(&self) -> bool {
        self.as_array().iter().all(|m| *m >= -MARGIN_ROUNDING)
    }
}

#[derive(Debug, Clone)]
pub struct CertificateResult {
    pub certified: bool,
    pub failure: Option<CertifyFailure>,
    pub support: Option<SupportPattern>,
    pub triple: Option<CandidateTriple>,
    pub kantorovich: Option<KantorovichReport>,
    pub newton_iters: usize,
    /// Best `W` found, in the permuted frame.
    pub w: Option<Matrix>,
    pub spectral: f64,
    /// `1 − (‖A‖₂ + 7.5)ε`.
    pub target: f64,
    pub margins: Option<Margins>,
    pub subgradient_iters: usize,
    /// Best `‖W‖₂` after each subgradient iteration.
    pub best_trace: Vec<f64>,
}

impl CertificateResult {
    fn failed(failure: CertifyFailure) -> Self {
        Self {
            certified: false,
            failure: Some(failure),
            support: None,
            triple: None,
            kantorovich: None,
            newton_iters: 0,
            w: None,
            spectral: f64::NAN,
            target: f64::NAN,
            margins: None,
            subgradient_iters: 0,
            best_trace: Vec::new(),
        }
    }
}

/// Evaluates all five margins for `w` (permuted frame).
pub fn certificate_margins(data: &CertificateData, w: &Matrix, a_spectral: f64) -> Result<Margins> {
    let (mm, nn) = data.blocks();
    let (m, n) = data.a.shape();
    let (r12, r21) = data.radii();
    let lam = data.lambda;
    let eps = data.eps;

    let w11_err = linalg::max_abs(&(w.view((0, 0), (mm, nn)).into_owned() - data.w11()));
    let pos = data.u1.min().min(data.v1.min());
    let i = pos - eps - w11_err;

    let inf_dev = |r0: usize, c0: usize, nr: usize, nc: usize| -> f64 {
        let mut d: f64 = 0.0;
        for r in r0..r0 + nr {
            for c in c0..c0 + nc {
                d = d.max((w[(r, c)] - lam * data.a[(r, c)]).abs());
            }
        }
        d
    };

    let w12 = w.view((0, nn), (mm, n - nn)).into_owned();
    let u2 = data.u1.norm_squared();
    // Correction u₁(u₁ᵀW₁₂)/‖u₁‖² restoring W₁₂ᵀu₁ = 0 exactly.
    let c12 = &data.u1 * (w12.tr_mul(&data.u1).transpose() / u2);
    let ii = r12 - inf_dev(0, nn, mm, n - nn) - linalg::max_abs(&c12);

    let w21 = w.view((mm, 0), (m - mm, nn)).into_owned();
    let v2 = data.v1.norm_squared();
    let c21 = (&w21 * &data.v1 / v2) * data.v1.transpose();
    let iii = r21 - inf_dev(mm, 0, m - mm, nn) - linalg::max_abs(&c21);

    let iv = data.theta - inf_dev(mm, nn, m - mm, n - nn);

    let spec_w = if w.iter().all(|x| *x == 0.0) { 0.0 } else { linalg::spectral_norm(w)? };
    let v = 1.0 - (a_spectral + 7.5) * eps - spec_w - c12.norm() - c21.norm();
    Ok(Margins { i, ii, iii, iv, v })
}

/// Attempts to certify that `x` is close to a rank-one optimum of `spec`.
///
/// `multiplier` seeds `λ` for Newton; a non-positive or non-finite value falls
/// back to the objective of `x`, which equals `λ` at the optimum.
pub fn certify(spec: &ProblemSpec, x: &PairedVariable, multiplier: f64, cfg: &CertifyConfig) -> Result<CertificateResult> {
    if x.shape() != spec.shape() {
        return Err(mismatch(spec.shape(), x.shape()));
    }
    let theta = spec.theta();
    let support = match extract_support(&x.x2, cfg.support_threshold) {
        Ok(s) => s,
        Err(Error::EmptySupport) => return Ok(CertificateResult::failed(CertifyFailure::EmptySupport)),
        Err(e) => return Err(e),
    };
    let ap = support.permute(spec.a());
    let (mm, nn) = (support.rows.len(), support.cols.len());
    let a11 = ap.view((0, 0), (mm, nn)).into_owned();
    let x2p = support.permute(&x.x2);
    let x11 = x2p.view((0, 0), (mm, nn)).into_owned();

    let (_, mut u0, mut v0) = match linalg::rank_one_approx(&x11) {
        Ok(t) => t,
        Err(Error::ZeroMatrix) => return Ok(CertificateResult::failed(CertifyFailure::EmptySupport)),
        Err(e) => return Err(e),
    };
    if v0.sum() < 0.0 {
        u0.neg_mut();
        v0.neg_mut();
    }
    let lambda0 = if multiplier.is_finite() && multiplier > 0.0 {
        multiplier
    } else {
        spec.objective(x)?
    };
    let x0 = CandidateTriple::new(lambda0, u0, v0);

    let mut result = CertificateResult::failed(CertifyFailure::Kantorovich);
    result.support = Some(support);
    let newton = match newton_solve(&a11, theta, &x0, cfg.eps_s, cfg.newton_max_iter) {
        Ok(n) => n,
        Err(Error::SingularJacobian) => {
            result.failure = Some(CertifyFailure::SingularJacobian);
            return Ok(result);
        }
        Err(Error::NoConvergence { .. }) => {
            result.failure = Some(CertifyFailure::NewtonDiverged);
            return Ok(result);
        }
        Err(e) => return Err(e),
    };
    result.newton_iters = newton.iterations;
    result.kantorovich = Some(newton.kantorovich.clone());
    result.triple = Some(newton.triple.clone());
    if !newton.kantorovich.passed {
        return Ok(result);
    }
    // A radius below the Newton tolerance is not resolved in floating point.
    let eps = newton.triple.eps.max(cfg.eps_s);
    let a_spec = spec.a_spectral_norm();
    let target = 1.0 - (a_spec + 7.5) * eps;
    result.target = target;
    if !(eps < 0.5) || target < 0.0 {
        result.failure = Some(CertifyFailure::RadiusTooLarge);
        return Ok(result);
    }

    let data = CertificateData {
        lambda: newton.triple.lambda,
        u1: Vector::from_column_slice(&newton.triple.u1),
        v1: Vector::from_column_slice(&newton.triple.v1),
        a: ap,
        theta,
        eps,
    };
    let spectral = |w: &Matrix| -> Result<f64> {
        if w.iter().all(|x| *x == 0.0) {
            Ok(0.0)
        } else {
            linalg::spectral_norm(w)
        }
    };
    let mut w = match project_certificate(&Matrix::zeros(data.a.nrows(), data.a.ncols()), &data) {
        Ok(w) => w,
        Err(Error::InfeasibleMargins { .. }) | Err(Error::InfeasibleBox(_)) => {
            result.failure = Some(CertifyFailure::InfeasibleMargins);
            return Ok(result);
        }
        Err(e) => return Err(e),
    };
    let mut best_norm = spectral(&w)?;
    let mut best_w = w.clone();
    let mut trace = vec![best_norm];
    let mut iters = 0;
    while iters < cfg.subgrad_max_iter && best_norm > target {
        iters += 1;
        let g = spectral_subgradient(&w)?;
        let alpha = cfg.step0 / (iters as f64).sqrt();
        w = project_certificate(&(&w - g * alpha), &data)?;
        let nrm = spectral(&w)?;
        if nrm < best_norm {
            best_norm = nrm;
            best_w.copy_from(&w);
        }
        trace.push(best_norm);
        if iters >= cfg.stagnation_window {
            let before = trace[iters - cfg.stagnation_window];
            if before - best_norm < cfg.stagnation_tol {
                break;
            }
        }
    }
    let margins = certificate_margins(&data, &best_w, a_spec)?;
    result.certified = margins.all_nonnegative();
    result.failure = (!result.certified).then_some(CertifyFailure::Margins);
    result.margins = Some(margins);
    result.spectral = best_norm;
    result.w = Some(best_w);
    result.subgradient_iters = iters;
    result.best_trace = trace;
    Ok(result)
}

/// [`Certifier`] running [`certify`] and keeping the latest result.
#[derive(Debug, Clone, Default)]
pub struct CertificateCertifier {
    pub cfg: CertifyConfig,
    pub last: Option<CertificateResult>,
    pub calls: usize,
}

impl CertificateCertifier {
    pub fn new(cfg: CertifyConfig) -> Self {
        Self {
            cfg,
            last: None,
            calls: 0,
        }
    }
}

impl Certifier for CertificateCertifier {
    fn check(&mut self, spec: &ProblemSpec, x: &PairedVariable, multiplier: f64) -> bool {
        self.calls += 1;
        match certify(spec, x, multiplier, &self.cfg) {
            Ok(r) => {
                let ok = r.certified;
                self.last = Some(r);
                ok
            }
            Err(_) => false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn triple(lambda: f64, u: &[f64], v: &[f64]) -> CandidateTriple {
        CandidateTriple::new(lambda, Vector::from_column_slice(u), Vector::from_column_slice(v))
    }

    fn random_triple(rng: &mut ChaCha8Rng, mm: usize, nn: usize) -> CandidateTriple {
        let u: Vec<f64> = (0..mm).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..nn).map(|_| rng.gen_range(-1.0..1.0)).collect();
        triple(rng.gen_range(0.1..2.0), &u, &v)
    }

    #[test]
    fn support_examples() {
        let mut x = Matrix::zeros(3, 4);
        x[(0, 0)] = 1.0;
        let s = extract_support(&x, 0.1).unwrap();
        assert_eq!((s.rows.clone(), s.cols.clone()), (vec![0], vec![0]));
        let s = extract_support(&Matrix::from_element(2, 3, 1.0), 0.1).unwrap();
        assert_eq!(s.row_perm, vec![0, 1]);
        assert_eq!(s.col_perm, vec![0, 1, 2]);
        assert!(matches!(extract_support(&Matrix::zeros(2, 2), 0.1), Err(Error::EmptySupport)));

        let mut x = Matrix::zeros(4, 3);
        x[(2, 1)] = 3.0;
        x[(3, 2)] = 1e-9;
        let s = extract_support(&x, 1e-6).unwrap();
        assert_eq!(s.row_perm, vec![2, 0, 1, 3]);
        assert_eq!(s.col_perm, vec![1, 0, 2]);
        let p = s.permute(&x);
        assert_eq!(p[(0, 0)], 3.0);
        assert_eq!(s.unpermute(&p), x);
    }

    #[test]
    fn residual_vanishes_at_analytic_roots() {
        let p = newton_residual(&Matrix::from_element(1, 1, 2.0), 0.5, &triple(0.75, &[1.0], &[1.0])).unwrap();
        assert_eq!(p, Vector::zeros(3));
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let p = newton_residual(&Matrix::from_element(2, 2, 1.0), 0.3, &triple(0.8, &[h, h], &[h, h])).unwrap();
        assert!(p.amax() < 1e-15);
    }

    #[test]
    fn residual_matches_componentwise_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = Matrix::from_fn(3, 2, |_, _| rng.gen_range(0.0..1.0));
        for _ in 0..20 {
            let x = random_triple(&mut rng, 3, 2);
            let p = newton_residual(&a, 0.4, &x).unwrap();
            for i in 0..3 {
                let mut s = -x.u1[i];
                for j in 0..2 {
                    s += (x.lambda * a[(i, j)] - 0.4) * x.v1[j];
                }
                assert!((p[i] - s).abs() < 1e-14);
            }
            for j in 0..2 {
                let mut s = -x.v1[j];
                for i in 0..3 {
                    s += (x.lambda * a[(i, j)] - 0.4) * x.u1[i];
                }
                assert!((p[3 + j] - s).abs() < 1e-14);
            }
            let nu: f64 = x.u1.iter().map(|v| v * v).sum();
            assert!((p[5] - (nu - 1.0)).abs() < 1e-14);
        }
    }

    #[test]
    fn scalar_jacobian() {
        let j = newton_jacobian(&Matrix::from_element(1, 1, 2.0), 0.5, &triple(0.75, &[1.0], &[1.0])).unwrap();
        let want = Matrix::from_row_slice(3, 3, &[2.0, -1.0, 1.0, 2.0, 1.0, -1.0, 0.0, 2.0, 0.0]);
        assert_eq!(j, want);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = Matrix::from_fn(3, 4, |_, _| rng.gen_range(0.0..1.0));
        let h = 1e-6;
        for _ in 0..20 {
            let x = random_triple(&mut rng, 3, 4);
            let j = newton_jacobian(&a, 0.3, &x).unwrap();
            let base = x.stacked();
            let mut fd = Matrix::zeros(8, 8);
            for c in 0..8 {
                let mut xp = base.clone();
                xp[c] += h;
                let mut xm = base.clone();
                xm[c] -= h;
                let pp = newton_residual(&a, 0.3, &CandidateTriple::from_stacked(&xp, 3)).unwrap();
                let pm = newton_residual(&a, 0.3, &CandidateTriple::from_stacked(&xm, 3)).unwrap();
                fd.set_column(c, &((pp - pm) / (2.0 * h)));
            }
            assert!((&fd - &j).norm() <= 1e-6 * j.norm());
        }
    }

    #[test]
    fn factored_system_matches_dense_jacobian() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for (mm, nn) in [(1, 1), (3, 2), (9, 4), (12, 3)] {
            let a = Matrix::from_fn(mm, nn, |_, _| rng.gen_range(0.0..1.0));
            let x = random_triple(&mut rng, mm, nn);
            let j = newton_jacobian(&a, 0.3, &x).unwrap();
            let sys = NewtonSystem::new(&a, 0.3, &x);
            let p = Vector::from_fn(mm + nn + 1, |_, _| rng.gen_range(-1.0..1.0));
            let step = sys.solve(&p).unwrap();
            assert!((&j * &step - &p).norm() < 1e-9 * (1.0 + p.norm()), "{mm}x{nn}");
            let dense = 1.0 / j.singular_values().min();
            let fast = sys.inverse_norm().unwrap();
            assert!((dense - fast).abs() < 1e-8 * dense, "{mm}x{nn}: {dense} vs {fast}");
        }
    }

    #[test]
    fn jacobian_is_affine() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let a = Matrix::from_fn(2, 3, |_, _| rng.gen_range(0.0..1.0));
        let x = random_triple(&mut rng, 2, 3);
        let y = random_triple(&mut rng, 2, 3);
        let sum = CandidateTriple::from_stacked(&(x.stacked() + y.stacked()), 2);
        let zero = CandidateTriple::from_stacked(&Vector::zeros(6), 2);
        let lhs = newton_jacobian(&a, 0.2, &x).unwrap() + newton_jacobian(&a, 0.2, &y).unwrap();
        let rhs = newton_jacobian(&a, 0.2, &sum).unwrap() + newton_jacobian(&a, 0.2, &zero).unwrap();
        assert!((lhs - rhs).amax() < 1e-14);
    }

    #[test]
    fn lipschitz_bound_holds_on_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let a = Matrix::from_fn(4, 3, |_, _| rng.gen_range(-1.0..2.0));
        let k = jacobian_lipschitz(&a).unwrap();
        for _ in 0..200 {
            let x = random_triple(&mut rng, 4, 3);
            let y = random_triple(&mut rng, 4, 3);
            let dj = newton_jacobian(&a, 0.3, &x).unwrap() - newton_jacobian(&a, 0.3, &y).unwrap();
            let lhs = linalg::spectral_norm(&dj).unwrap();
            assert!(lhs <= k * (x.stacked() - y.stacked()).norm() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn newton_scalar_converges_quickly() {
        let a = Matrix::from_element(1, 1, 2.0);
        let out = newton_solve(&a, 0.5, &triple(0.7, &[0.9], &[1.1]), 1e-10, 50).unwrap();
        assert!(out.iterations <= 6);
        assert!(out.residual <= 1e-10);
        assert!((out.triple.lambda - 0.75).abs() < 1e-10);
        assert!((out.triple.u1[0] - 1.0).abs() < 1e-10);
        assert!((out.triple.v1[0] - 1.0).abs() < 1e-10);

        let exact = newton_solve(&a, 0.5, &triple(0.75, &[1.0], &[1.0]), 1e-10, 50).unwrap();
        assert_eq!(exact.iterations, 0);
        assert_eq!(exact.triple.eps, 0.0);
    }

    #[test]
    fn newton_is_quadratic_on_all_ones() {
        let a = Matrix::from_element(2, 2, 1.0);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let star = triple(0.8, &[h, h], &[h, h]).stacked();
        let mut x = triple(0.9, &[0.6, 0.75], &[0.8, 0.65]);
        let mut errs = vec![(x.stacked() - &star).norm()];
        for _ in 0..4 {
            let j = newton_jacobian(&a, 0.3, &x).unwrap();
            let p = newton_residual(&a, 0.3, &x).unwrap();
            let s = j.lu().solve(&p).unwrap();
            x = CandidateTriple::from_stacked(&(x.stacked() - s), 2);
            errs.push((x.stacked() - &star).norm());
        }
        for w in errs.windows(2) {
            if w[0] > 1e-7 {
                assert!(w[1] <= 10.0 * w[0] * w[0], "{errs:?}");
            }
        }
        assert!(errs.last().unwrap() < &1e-12);
    }

    #[test]
    fn kantorovich_examples() {
        let a = Matrix::from_element(1, 1, 2.0);
        let r = kantorovich_check(&a, 0.5, &triple(0.75, &[1.0], &[1.0])).unwrap();
        assert!(r.passed);
        assert_eq!(r.eta, 0.0);
        assert_eq!(r.h, 0.0);

        let h = std::f64::consts::FRAC_1_SQRT_2;
        let cases = [
            (Matrix::from_element(1, 1, 2.0), 0.5, triple(0.76, &[0.99], &[1.01]), triple(0.75, &[1.0], &[1.0])),
            (
                Matrix::from_element(2, 2, 1.0),
                0.3,
                triple(0.801, &[0.70, 0.71], &[0.71, 0.705]),
                triple(0.8, &[h, h], &[h, h]),
            ),
        ];
        for (a, th, x0, star) in cases {
            let r = kantorovich_check(&a, th, &x0).unwrap();
            assert!(r.passed, "{r:?}");
            let dist = (x0.stacked() - star.stacked()).norm();
            assert!(dist <= r.t_star.unwrap() * (1.0 + 1e-9), "{dist} vs {r:?}");
        }
    }

    /// Bisection on μ in the clip formula, as an independent oracle.
    fn knapsack_bisect(w: &[f64], u: &[f64], lo: &[f64], hi: &[f64]) -> Vec<f64> {
        let eval = |mu: f64| -> (Vec<f64>, f64) {
            let x: Vec<f64> = (0..w.len()).map(|i| (w[i] - mu * u[i]).clamp(lo[i], hi[i])).collect();
            let g = x.iter().zip(u).map(|(a, b)| a * b).sum();
            (x, g)
        };
        let (mut a, mut b) = (-1e6, 1e6);
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if eval(mid).1 > 0.0 {
                a = mid;
            } else {
                b = mid;
            }
        }
        eval(0.5 * (a + b)).0
    }

    #[test]
    fn knapsack_examples() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let w = knapsack_project(&[1.0, 0.0], &[s, s], &[-1.0, -1.0], &[1.0, 1.0]).unwrap();
        assert!((w[0] - 0.5).abs() < 1e-15 && (w[1] + 0.5).abs() < 1e-15);
        let feasible = [0.3, -0.3, 0.0];
        let w = knapsack_project(&feasible, &[1.0, 1.0, 2.0], &[-1.0; 3], &[1.0; 3]).unwrap();
        assert_eq!(w, feasible.to_vec());
        assert!(knapsack_project(&[0.0], &[1.0], &[1.0], &[2.0]).is_err());
        assert!(knapsack_project(&[0.0], &[1.0], &[1.0], &[0.0]).is_err());
    }

    #[test]
    fn knapsack_matches_bisection() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            let n = rng.gen_range(1..12);
            let w: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let u: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            let c: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect();
            let r = rng.gen_range(0.6..2.0);
            let lo: Vec<f64> = c.iter().map(|x| x - r).collect();
            let hi: Vec<f64> = c.iter().map(|x| x + r).collect();
            let got = knapsack_project(&w, &u, &lo, &hi).unwrap();
            let want = knapsack_bisect(&w, &u, &lo, &hi);
            for (a, b) in got.iter().zip(&want) {
                worst = worst.max((a - b).abs());
            }
        }
        assert!(worst <= 1e-10, "{worst}");
    }

    fn planted_data(rng: &mut ChaCha8Rng) -> CertificateData {
        let a = Matrix::from_fn(4, 4, |i, j| if i < 2 && j < 2 { 1.0 } else { rng.gen_range(0.0..0.2) });
        let h = std::f64::consts::FRAC_1_SQRT_2;
        CertificateData {
            lambda: 0.8,
            u1: Vector::from_column_slice(&[h, h]),
            v1: Vector::from_column_slice(&[h, h]),
            a,
            theta: 0.3,
            eps: 1e-6,
        }
    }

    #[test]
    fn clamp_block() {
        let data = CertificateData {
            lambda: 1.0,
            u1: Vector::from_column_slice(&[1.0]),
            v1: Vector::from_column_slice(&[1.0]),
            a: Matrix::from_row_slice(2, 2, &[1.5, 0.0, 0.0, 0.0]),
            theta: 0.5,
            eps: 1e-6,
        };
        let wb = Matrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 0.9]);
        let w = project_certificate(&wb, &data).unwrap();
        assert_eq!(w[(1, 1)], 0.5);
        assert_eq!(w[(0, 0)], 0.0);
    }

    #[test]
    fn projection_is_idempotent_and_keeps_feasible_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let data = planted_data(&mut rng);
        let wb = Matrix::from_fn(4, 4, |_, _| rng.gen_range(-1.0..1.0));
        let p = project_certificate(&wb, &data).unwrap();
        let pp = project_certificate(&p, &data).unwrap();
        assert!((&p - &pp).amax() < 1e-12);
        let mut q = p.clone();
        q.view_mut((0, 0), (2, 2)).fill(7.0);
        let qp = project_certificate(&q, &data).unwrap();
        assert!((&qp - &p).amax() < 1e-12);
        let m = certificate_margins(&data, &p, 1.0).unwrap();
        for x in [m.ii, m.iii, m.iv] {
            assert!(x >= -1e-10);
        }
    }

    #[test]
    fn projection_matches_generic_qp() {
        // Dykstra's alternating projections between the box and the
        // hyperplanes converge to the same Euclidean projection.
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let data = planted_data(&mut rng);
        let wb = Matrix::from_fn(4, 4, |_, _| rng.gen_range(-1.0..1.0));
        let p = project_certificate(&wb, &data).unwrap();
        let (r12, r21) = data.radii();
        let mut x = wb.clone();
        let mut pb = Matrix::zeros(4, 4);
        let mut qh = Matrix::zeros(4, 4);
        for _ in 0..100_000 {
            let y = &x + &pb;
            let mut b = y.clone();
            for i in 0..4 {
                for j in 0..4 {
                    let c = data.lambda * data.a[(i, j)];
                    let r = match (i < 2, j < 2) {
                        (true, true) => 0.0,
                        (true, false) => r12,
                        (false, true) => r21,
                        (false, false) => data.theta,
                    };
                    b[(i, j)] = if i < 2 && j < 2 { data.w11()[(i, j)] } else { y[(i, j)].clamp(c - r, c + r) };
                }
            }
            pb = &y - &b;
            let z = &b + &qh;
            let mut hproj = z.clone();
            for j in 2..4 {
                let col = z.view((0, j), (2, 1)).into_owned();
                let d = data.u1.dot(&col) / data.u1.norm_squared();
                for i in 0..2 {
                    hproj[(i, j)] -= d * data.u1[i];
                }
            }
            for i in 2..4 {
                let row = z.view((i, 0), (1, 2)).transpose();
                let d = data.v1.dot(&row) / data.v1.norm_squared();
                for j in 0..2 {
                    hproj[(i, j)] -= d * data.v1[j];
                }
            }
            qh = &z - &hproj;
            x = hproj;
        }
        assert!((&x - &p).amax() <= 1e-6, "{}", (&x - &p).amax());
    }

    #[test]
    fn subgradient_examples() {
        let g = spectral_subgradient(&Matrix::from_diagonal(&Vector::from_column_slice(&[2.0, 1.0]))).unwrap();
        assert!((g - Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0])).amax() < 1e-14);
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let w = Matrix::from_fn(3, 5, |_, _| rng.gen_range(-1.0..1.0));
        let g = spectral_subgradient(&w).unwrap();
        assert!((g.norm() - 1.0).abs() < 1e-12);
        let nw = linalg::spectral_norm(&w).unwrap();
        for _ in 0..100 {
            let y = Matrix::from_fn(3, 5, |_, _| rng.gen_range(-2.0..2.0));
            let ny = linalg::spectral_norm(&y).unwrap();
            assert!(ny >= nw + g.dot(&(&y - &w)) - 1e-12);
        }
        assert!(matches!(spectral_subgradient(&Matrix::zeros(2, 2)), Err(Error::ZeroMatrix)));
    }

    fn planted_solution(m: usize, n: usize, mm: usize, nn: usize) -> (ProblemSpec, PairedVariable) {
        let a = Matrix::from_fn(m, n, |i, j| if i < mm && j < nn { 1.0 } else { 0.0 });
        let a = &a / linalg::spectral_norm(&a).unwrap();
        let x = Matrix::from_fn(m, n, |i, j| if i < mm && j < nn { 1.0 } else { 0.0 });
        let x = &x / a.dot(&x);
        (ProblemSpec::new(a, 0.3).unwrap(), PairedVariable { x1: x.clone(), x2: x })
    }

    #[test]
    fn certifies_exact_planted_block() {
        let (spec, x) = planted_solution(6, 5, 3, 2);
        let lam = spec.objective(&x).unwrap();
        let r = certify(&spec, &x, lam, &CertifyConfig::default()).unwrap();
        assert!(r.certified, "{:?} {:?}", r.failure, r.margins);
        assert_eq!(r.support.as_ref().unwrap().rows, vec![0, 1, 2]);
        assert_eq!(r.support.as_ref().unwrap().cols, vec![0, 1]);
        for m in r.margins.unwrap().as_array() {
            assert!(m >= 0.0);
        }
        for w in r.best_trace.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn large_radius_fails_immediately() {
        let (spec, x) = planted_solution(4, 4, 2, 2);
        let mut cfg = CertifyConfig::default();
        // A sloppy multiplier with no Newton refinement leaves a large radius.
        cfg.eps_s = 10.0;
        let r = certify(&spec, &x, 0.3, &cfg).unwrap();
        assert!(!r.certified);
        assert_eq!(r.subgradient_iters, 0);
    }

    #[test]
    fn wrong_support_is_not_certified() {
        // The optimum is the full all-ones block; a corner guess must fail.
        let a = Matrix::from_element(3, 3, 1.0);
        let spec = ProblemSpec::new(&a / 3.0, 0.3).unwrap();
        let mut x2 = Matrix::zeros(3, 3);
        x2[(0, 0)] = 1.0;
        let x = PairedVariable { x1: x2.clone(), x2 };
        let r = certify(&spec, &x, 1.0, &CertifyConfig::default()).unwrap();
        assert!(!r.certified);
    }
}

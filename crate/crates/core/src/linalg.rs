//! Dense linear algebra kernels: SVD, norms and the two proximal mappings.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Thin singular value decomposition `M = U diag(sigma) Vᵀ`.
///
/// Singular values are sorted non-increasing. Each singular pair is signed so
/// that the largest-magnitude entry of its left vector is positive.
#[derive(Debug, Clone)]
pub struct SvdResult {
    pub u: Matrix,
    pub sigma: Vec<f64>,
    pub v: Matrix,
}

impl SvdResult {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    pub fn reconstruct(&self) -> Matrix {
        let mut scaled = self.u.clone();
        for (j, s) in self.sigma.iter().enumerate() {
            scaled.column_mut(j).scale_mut(*s);
        }
        scaled * self.v.transpose()
    }
}

fn check_finite(m: &Matrix) -> Result<()> {
    if m.as_slice().iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidProblem("matrix has non-finite entries".into()))
    }
}

fn iteration_cap(m: &Matrix) -> usize {
    1000 + 200 * m.nrows().min(m.ncols())
}

/// Matrices whose long side is at least this multiple of the short side (and
/// that are not tiny) are decomposed through the Gram matrix of the short side.
const GRAM_ASPECT: usize = 4;
const GRAM_MIN_ENTRIES: usize = 20_000;

pub(crate) fn prefers_gram(m: &Matrix) -> bool {
    let (r, c) = m.shape();
    let (lo, hi) = (r.min(c), r.max(c));
    lo > 0 && hi >= GRAM_ASPECT * lo && r * c >= GRAM_MIN_ENTRIES
}

fn raw_svd(m: Matrix) -> Result<(Matrix, Vec<f64>, Matrix)> {
    let (r, c) = m.shape();
    if r >= 2 * c && c > 0 {
        // Tall: reduce to the square triangular factor first.
        let qr = m.qr();
        let q = qr.q();
        let rfac = qr.r();
        let cap = iteration_cap(&rfac);
        let s = rfac
            .try_svd(true, true, f64::EPSILON, cap)
            .ok_or(Error::ConvergenceFailure)?;
        let u = q * s.u.ok_or(Error::ConvergenceFailure)?;
        let v = s.v_t.ok_or(Error::ConvergenceFailure)?.transpose();
        Ok((u, s.singular_values.iter().copied().collect(), v))
    } else if c >= 2 * r && r > 0 {
        let (u, s, v) = raw_svd(m.transpose())?;
        Ok((v, s, u))
    } else {
        let cap = iteration_cap(&m);
        let s = m
            .try_svd(true, true, f64::EPSILON, cap)
            .ok_or(Error::ConvergenceFailure)?;
        let u = s.u.ok_or(Error::ConvergenceFailure)?;
        let v = s.v_t.ok_or(Error::ConvergenceFailure)?.transpose();
        Ok((u, s.singular_values.iter().copied().collect(), v))
    }
}

fn sign_fix(u: &mut Matrix, v: &mut Matrix) {
    for j in 0..u.ncols() {
        let mut best = 0.0f64;
        let mut sign = 1.0;
        for x in u.column(j).iter() {
            if x.abs() > best {
                best = x.abs();
                sign = x.signum();
            }
        }
        if sign < 0.0 {
            u.column_mut(j).neg_mut();
            v.column_mut(j).neg_mut();
        }
    }
}

/// Singular value decomposition, optionally truncated to the leading `rank_cap`
/// triples.
pub fn svd(m: &Matrix, rank_cap: Option<usize>) -> Result<SvdResult> {
    check_finite(m)?;
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Err(Error::EmptyMatrix);
    }
    let (u, sigma, v) = raw_svd(m.clone())?;
    let mut order: Vec<usize> = (0..sigma.len()).collect();
    order.sort_by(|&a, &b| sigma[b].total_cmp(&sigma[a]));
    let keep = rank_cap.map_or(order.len(), |k| k.min(order.len()));
    let order = &order[..keep];
    let mut us = Matrix::zeros(rows, keep);
    let mut vs = Matrix::zeros(cols, keep);
    let mut ss = Vec::with_capacity(keep);
    for (dst, &src) in order.iter().enumerate() {
        us.set_column(dst, &u.column(src));
        vs.set_column(dst, &v.column(src));
        ss.push(sigma[src].max(0.0));
    }
    sign_fix(&mut us, &mut vs);
    Ok(SvdResult {
        u: us,
        sigma: ss,
        v: vs,
    })
}

/// Singular values only, non-increasing.
pub fn singular_values(m: &Matrix) -> Result<Vec<f64>> {
    check_finite(m)?;
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return Ok(Vec::new());
    }
    let mut s: Vec<f64> = if r >= 2 * c {
        let rfac = m.clone().qr().r();
        let cap = iteration_cap(&rfac);
        rfac.try_svd(false, false, f64::EPSILON, cap)
            .ok_or(Error::ConvergenceFailure)?
            .singular_values
            .iter()
            .copied()
            .collect()
    } else if c >= 2 * r {
        return singular_values(&m.transpose());
    } else {
        let cap = iteration_cap(m);
        m.clone()
            .try_svd(false, false, f64::EPSILON, cap)
            .ok_or(Error::ConvergenceFailure)?
            .singular_values
            .iter()
            .copied()
            .collect()
    };
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(s.into_iter().map(|x| x.max(0.0)).collect())
}

pub fn spectral_norm(m: &Matrix) -> Result<f64> {
    if m.as_slice().iter().all(|x| *x == 0.0) {
        return Ok(0.0);
    }
    if prefers_gram(m) {
        return Ok(top_singular_triple(m)?.0);
    }
    Ok(singular_values(m)?.first().copied().unwrap_or(0.0))
}

pub fn nuclear_norm(m: &Matrix) -> Result<f64> {
    Ok(singular_values(m)?.iter().sum())
}

pub fn l1_norm(m: &Matrix) -> f64 {
    m.as_slice().iter().map(|x| x.abs()).sum()
}

/// Largest absolute entry.
pub fn max_abs(m: &Matrix) -> f64 {
    m.as_slice().iter().fold(0.0f64, |acc, x| acc.max(x.abs()))
}

/// Eigen-decomposition of the Gram matrix of the short side, largest first.
/// Returns `(sigma_i, w_i)` where `w_i` is a right singular vector when the
/// matrix is tall and a left singular vector when it is wide.
fn gram_spectrum(m: &Matrix) -> (Vec<f64>, Matrix) {
    let gram = if m.nrows() >= m.ncols() {
        m.transpose() * m
    } else {
        m * m.transpose()
    };
    let eig = gram.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut vecs = Matrix::zeros(eig.eigenvectors.nrows(), order.len());
    let mut sig = Vec::with_capacity(order.len());
    for (dst, &src) in order.iter().enumerate() {
        vecs.set_column(dst, &eig.eigenvectors.column(src));
        sig.push(eig.eigenvalues[src].max(0.0).sqrt());
    }
    (sig, vecs)
}

/// Leading singular triple `(sigma, u, v)` with the sign convention of [`svd`].
pub fn top_singular_triple(m: &Matrix) -> Result<(f64, Vector, Vector)> {
    check_finite(m)?;
    if m.as_slice().iter().all(|x| *x == 0.0) {
        return Err(Error::ZeroMatrix);
    }
    let (mut u, mut v) = if prefers_gram(m) {
        let (_, w) = gram_spectrum(m);
        let w0 = w.column(0).into_owned();
        if m.nrows() >= m.ncols() {
            let mv = m * &w0;
            let n = mv.norm();
            (mv / n, w0)
        } else {
            let mu = m.transpose() * &w0;
            let n = mu.norm();
            (w0, mu / n)
        }
    } else {
        let s = svd(m, Some(1))?;
        (s.u.column(0).into_owned(), s.v.column(0).into_owned())
    };
    let sigma = u.dot(&(m * &v));
    let imax = u.iamax();
    if u[imax] < 0.0 {
        u.neg_mut();
        v.neg_mut();
    }
    Ok((sigma.abs(), u, v))
}

/// Result of singular value soft-thresholding.
#[derive(Debug, Clone)]
pub struct Shrinkage {
    pub matrix: Matrix,
    /// Nuclear norm of `matrix`, i.e. the sum of the shrunk singular values.
    pub nuclear_norm: f64,
    pub rank: usize,
}

/// Singular value soft-thresholding: `U diag(max(sigma - tau, 0)) Vᵀ`.
pub fn shrink_singular_values(m: &Matrix, tau: f64) -> Result<Shrinkage> {
    if !(tau > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "shrinkage threshold must be positive, got {tau}"
        )));
    }
    let (r, c) = m.shape();
    if m.as_slice().iter().all(|x| *x == 0.0) {
        return Ok(Shrinkage {
            matrix: Matrix::zeros(r, c),
            nuclear_norm: 0.0,
            rank: 0,
        });
    }
    check_finite(m)?;
    if prefers_gram(m) {
        return Ok(shrink_via_gram(m, tau));
    }
    let s = svd(m, None)?;
    let kept = s.sigma.iter().take_while(|x| **x > tau).count();
    if kept == 0 {
        return Ok(Shrinkage {
            matrix: Matrix::zeros(r, c),
            nuclear_norm: 0.0,
            rank: 0,
        });
    }
    let mut scaled = s.u.columns(0, kept).into_owned();
    let mut nuclear = 0.0;
    for j in 0..kept {
        let shrunk = s.sigma[j] - tau;
        scaled.column_mut(j).scale_mut(shrunk);
        nuclear += shrunk;
    }
    Ok(Shrinkage {
        matrix: scaled * s.v.columns(0, kept).transpose(),
        nuclear_norm: nuclear,
        rank: kept,
    })
}

fn shrink_via_gram(m: &Matrix, tau: f64) -> Shrinkage {
    let (sig, w) = gram_spectrum(m);
    let kept = sig.iter().take_while(|s| **s > tau).count();
    let (r, c) = m.shape();
    if kept == 0 {
        return Shrinkage {
            matrix: Matrix::zeros(r, c),
            nuclear_norm: 0.0,
            rank: 0,
        };
    }
    let wk = w.columns(0, kept).into_owned();
    let mut wk_scaled = wk.clone();
    let mut nuclear = 0.0;
    for j in 0..kept {
        wk_scaled.column_mut(j).scale_mut(1.0 - tau / sig[j]);
        nuclear += sig[j] - tau;
    }
    let proj = &wk_scaled * wk.transpose();
    let matrix = if r >= c { m * proj } else { proj * m };
    Shrinkage {
        matrix,
        nuclear_norm: nuclear,
        rank: kept,
    }
}

/// Proximal mapping of `tau * ‖·‖_*`.
pub fn prox_nuclear(m: &Matrix, tau: f64) -> Result<Matrix> {
    Ok(shrink_singular_values(m, tau)?.matrix)
}

/// Proximal mapping of `tau * ‖·‖_1`: entrywise soft thresholding.
pub fn prox_l1(m: &Matrix, tau: f64) -> Matrix {
    let v = m.as_slice().iter().map(|x| x.signum() * (x.abs() - tau).max(0.0)).collect();
    Matrix::from_vec(m.nrows(), m.ncols(), v)
}

/// `‖X‖_θ = ‖X‖_* + θ‖X‖_1`.
pub fn theta_norm(m: &Matrix, theta: f64) -> Result<f64> {
    Ok(nuclear_norm(m)? + theta * l1_norm(m))
}

/// Best rank-one approximation `sigma u vᵀ`; `u` has its largest-magnitude
/// entry positive.
pub fn rank_one_approx(m: &Matrix) -> Result<(f64, Vector, Vector)> {
    top_singular_triple(m)
}

//! The LAROS program in split form
//!
//! ```text
//!   min ‖X₁‖_* + θ‖X₂‖₁   s.t.  𝒜(X) − b ∈ 𝒬,
//!   𝒜(X) = (⟨A, X₁⟩, X₁ − X₂),  b = (1, 0),  𝒬 = {0} × {0}
//! ```
//!
//! together with the variable spaces it lives on.

use std::ops::{Add, Mul, Sub};

use crate::error::{mismatch, Error, Result};
use crate::linalg::{self, Matrix};

/// Data matrix and weight of one problem instance.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    a: Matrix,
    theta: f64,
    a_spectral: f64,
    map_norm_sq: f64,
}

impl ProblemSpec {
    pub fn new(a: Matrix, theta: f64) -> Result<Self> {
        if !(theta > 0.0 && theta.is_finite()) {
            return Err(Error::InvalidProblem(format!(
                "theta must be positive and finite, got {theta}"
            )));
        }
        if a.nrows() == 0 || a.ncols() == 0 {
            return Err(Error::EmptyMatrix);
        }
        if !a.iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidProblem("A has non-finite entries".into()));
        }
        if a.iter().all(|x| *x == 0.0) {
            return Err(Error::ZeroMatrix);
        }
        let a_spectral = linalg::spectral_norm(&a)?;
        let f = a.norm_squared();
        let map_norm_sq = 0.5 * (f + 2.0 + (f * f + 4.0).sqrt());
        Ok(Self {
            a,
            theta,
            a_spectral,
            map_norm_sq,
        })
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn shape(&self) -> (usize, usize) {
        self.a.shape()
    }

    /// `‖A‖₂`, computed once at construction.
    pub fn a_spectral_norm(&self) -> f64 {
        self.a_spectral
    }

    /// `‖𝒜‖²`, the largest eigenvalue of `𝒜𝒜*`; at most `‖A‖_F² + 2`.
    pub fn map_norm_squared(&self) -> f64 {
        self.map_norm_sq
    }

    /// Lipschitz modulus `λ‖𝒜‖²` shared by `∇_zΘ_λ` and `∇_XΨ_λ`.
    pub fn lipschitz(&self, lambda: f64) -> f64 {
        lambda * self.map_norm_sq
    }

    /// Right-hand side `b = (1, 0)`.
    pub fn b(&self) -> DualPoint {
        let (m, n) = self.shape();
        DualPoint {
            z1: 1.0,
            z2: Matrix::zeros(m, n),
        }
    }

    /// Objective `‖X₁‖_* + θ‖X₂‖₁`.
    pub fn objective(&self, x: &PairedVariable) -> Result<f64> {
        Ok(linalg::nuclear_norm(&x.x1)? + self.theta * linalg::l1_norm(&x.x2))
    }

    fn check(&self, m: &Matrix) -> Result<()> {
        if m.shape() != self.shape() {
            return Err(mismatch(self.shape(), m.shape()));
        }
        Ok(())
    }
}

/// A point `X = (X₁, X₂)` of the primal space.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedVariable {
    pub x1: Matrix,
    pub x2: Matrix,
}

impl PairedVariable {
    pub fn new(x1: Matrix, x2: Matrix) -> Result<Self> {
        if x1.shape() != x2.shape() {
            return Err(mismatch(x1.shape(), x2.shape()));
        }
        Ok(Self { x1, x2 })
    }

    pub fn zeros(m: usize, n: usize) -> Self {
        Self {
            x1: Matrix::zeros(m, n),
            x2: Matrix::zeros(m, n),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.x1.shape()
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.x1.dot(&other.x1) + self.x2.dot(&other.x2)
    }

    pub fn norm_squared(&self) -> f64 {
        self.x1.norm_squared() + self.x2.norm_squared()
    }

    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }
}

impl Add for &PairedVariable {
    type Output = PairedVariable;
    fn add(self, rhs: Self) -> PairedVariable {
        PairedVariable {
            x1: &self.x1 + &rhs.x1,
            x2: &self.x2 + &rhs.x2,
        }
    }
}

impl Sub for &PairedVariable {
    type Output = PairedVariable;
    fn sub(self, rhs: Self) -> PairedVariable {
        PairedVariable {
            x1: &self.x1 - &rhs.x1,
            x2: &self.x2 - &rhs.x2,
        }
    }
}

impl Mul<f64> for &PairedVariable {
    type Output = PairedVariable;
    fn mul(self, s: f64) -> PairedVariable {
        PairedVariable {
            x1: &self.x1 * s,
            x2: &self.x2 * s,
        }
    }
}

/// A point `z = (z₁, Z₂)` of the multiplier space `ℝ × ℝ^{m×n}`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualPoint {
    pub z1: f64,
    pub z2: Matrix,
}

impl DualPoint {
    pub fn zeros(m: usize, n: usize) -> Self {
        Self {
            z1: 0.0,
            z2: Matrix::zeros(m, n),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.z2.shape()
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.z1 * other.z1 + self.z2.dot(&other.z2)
    }

    pub fn norm_squared(&self) -> f64 {
        self.z1 * self.z1 + self.z2.norm_squared()
    }

    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }
}

impl Add for &DualPoint {
    type Output = DualPoint;
    fn add(self, rhs: Self) -> DualPoint {
        DualPoint {
            z1: self.z1 + rhs.z1,
            z2: &self.z2 + &rhs.z2,
        }
    }
}

impl Sub for &DualPoint {
    type Output = DualPoint;
    fn sub(self, rhs: Self) -> DualPoint {
        DualPoint {
            z1: self.z1 - rhs.z1,
            z2: &self.z2 - &rhs.z2,
        }
    }
}

impl Mul<f64> for &DualPoint {
    type Output = DualPoint;
    fn mul(self, s: f64) -> DualPoint {
        DualPoint {
            z1: self.z1 * s,
            z2: &self.z2 * s,
        }
    }
}

/// `𝒜(X) = (⟨A, X₁⟩, X₁ − X₂)`.
pub fn apply_map(spec: &ProblemSpec, x: &PairedVariable) -> Result<DualPoint> {
    spec.check(&x.x1)?;
    spec.check(&x.x2)?;
    Ok(DualPoint {
        z1: spec.a.dot(&x.x1),
        z2: &x.x1 - &x.x2,
    })
}

/// `𝒜*z = (z₁A + Z₂, −Z₂)`.
pub fn apply_adjoint(spec: &ProblemSpec, z: &DualPoint) -> Result<PairedVariable> {
    spec.check(&z.z2)?;
    Ok(PairedVariable {
        x1: &spec.a * z.z1 + &z.z2,
        x2: -&z.z2,
    })
}

/// Nonnegative-orthant projection, provided for cones other than the one used
/// here (whose dual cone is the whole space).
pub fn project_nonnegative(z: &DualPoint) -> DualPoint {
    DualPoint {
        z1: z.z1.max(0.0),
        z2: z.z2.map(|x| x.max(0.0)),
    }
}

//! Symmetric positive definite matrices and the weighted inner-product
//! spaces they induce.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-12;

/// A symmetric positive definite matrix `Q`, defining `<x, y>_Q = xᵀQy`.
///
/// The Cholesky factor, the inverse and the extreme eigenvalues are computed
/// once at construction since projections and optimal responses reuse them in
/// every iteration.
#[derive(Clone, Debug)]
pub struct SpdMatrix {
    m: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    inv: DMatrix<f64>,
    min_eig: f64,
    max_eig: f64,
    diagonal: bool,
    scalar: Option<f64>,
}

impl SpdMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() || m.nrows() == 0 {
            return Err(Error::NotPositiveDefinite(format!(
                "expected a nonempty square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let n = m.nrows();
        let scale = m.amax().max(1.0);
        for i in 0..n {
            for j in (i + 1)..n {
                if (m[(i, j)] - m[(j, i)]).abs() > SYMMETRY_TOL * scale {
                    return Err(Error::NotPositiveDefinite(format!(
                        "asymmetric entries ({i},{j})"
                    )));
                }
            }
        }
        let eig = SymmetricEigen::new(m.clone());
        let min_eig = eig.eigenvalues.min();
        let max_eig = eig.eigenvalues.max();
        if min_eig <= 0.0 {
            return Err(Error::NotPositiveDefinite(format!(
                "minimum eigenvalue {min_eig:e}"
            )));
        }
        let chol = Cholesky::new(m.clone())
            .ok_or_else(|| Error::NotPositiveDefinite("Cholesky failed".into()))?;
        let inv = chol.inverse();
        let diagonal = (0..n).all(|i| (0..n).all(|j| i == j || m[(i, j)] == 0.0));
        let scalar = if diagonal && (0..n).all(|i| m[(i, i)] == m[(0, 0)]) {
            Some(m[(0, 0)])
        } else {
            None
        };
        Ok(Self {
            m,
            chol,
            inv,
            min_eig,
            max_eig,
            diagonal,
            scalar,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self::scaled_identity(n, 1.0)
    }

    /// `s · I_n`; panics if `s <= 0`.
    pub fn scaled_identity(n: usize, s: f64) -> Self {
        assert!(s > 0.0, "scale must be positive");
        Self::new(DMatrix::identity(n, n) * s).expect("scaled identity is SPD")
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(crate::linalg::matrix_from_rows(rows)?)
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inv
    }

    /// Solves `Q x = v`.
    pub fn solve(&self, v: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(v)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.min_eig
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.max_eig
    }

    pub fn is_diagonal(&self) -> bool {
        self.diagonal
    }

    /// `Some(s)` when the matrix is exactly `s · I`.
    pub fn as_scalar(&self) -> Option<f64> {
        self.scalar
    }

    pub fn inner(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        if self.diagonal {
            u.iter()
                .zip(v.iter())
                .enumerate()
                .map(|(i, (a, b))| a * self.m[(i, i)] * b)
                .sum()
        } else {
            u.dot(&(&self.m * v))
        }
    }

    pub fn norm_sq(&self, v: &DVector<f64>) -> f64 {
        self.inner(v, v)
    }

    pub fn norm(&self, v: &DVector<f64>) -> f64 {
        self.norm_sq(v).max(0.0).sqrt()
    }
}

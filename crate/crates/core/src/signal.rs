//! Stacked per-agent signals `𝒛 = [z¹; …; z^N]`.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};

/// One `n`-vector per agent, stored as the columns of an `n×N` matrix.
///
/// Mixing with `P^ν ⊗ I_n` is then `Z (P^ν)ᵀ`, and the column-major storage is
/// exactly the stacked vector.
#[derive(Clone, Debug, PartialEq)]
pub struct StackedSignal {
    z: DMatrix<f64>,
}

impl StackedSignal {
    pub fn zeros(n: usize, population: usize) -> Self {
        Self {
            z: DMatrix::zeros(n, population),
        }
    }

    pub fn from_matrix(z: DMatrix<f64>) -> Self {
        Self { z }
    }

    pub fn from_agents(agents: &[DVector<f64>]) -> Result<Self> {
        let n = agents
            .first()
            .ok_or_else(|| Error::Precondition("empty population".into()))?
            .len();
        for a in agents {
            check_dim(n, a.len())?;
        }
        Ok(Self {
            z: DMatrix::from_columns(agents),
        })
    }

    /// Splits a stacked `(N·n)`-vector into agents of dimension `n`.
    pub fn from_stacked(v: &DVector<f64>, n: usize) -> Result<Self> {
        if n == 0 || !v.len().is_multiple_of(n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: v.len(),
            });
        }
        Ok(Self {
            z: DMatrix::from_column_slice(n, v.len() / n, v.as_slice()),
        })
    }

    pub fn dim(&self) -> usize {
        self.z.nrows()
    }

    pub fn population(&self) -> usize {
        self.z.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.z
    }

    pub fn agent(&self, i: usize) -> DVector<f64> {
        self.z.column(i).into_owned()
    }

    pub fn agents(&self) -> Vec<DVector<f64>> {
        self.z.column_iter().map(|c| c.into_owned()).collect()
    }

    pub fn stacked(&self) -> DVector<f64> {
        DVector::from_column_slice(self.z.as_slice())
    }

    /// `(W ⊗ I_n) 𝒛` for an `N×N` weight matrix `W`.
    pub fn mix(&self, w: &DMatrix<f64>) -> Self {
        Self {
            z: &self.z * w.transpose(),
        }
    }

    /// `(1 − t)·self + t·other`.
    pub fn blend(&self, other: &Self, t: f64) -> Self {
        Self {
            z: &self.z * (1.0 - t) + &other.z * t,
        }
    }

    /// Population mean `(1/N) Σᵢ zⁱ`.
    pub fn mean(&self) -> DVector<f64> {
        self.z.column_mean()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        (&self.z - &other.z).amax()
    }

    pub fn norm(&self) -> f64 {
        self.z.norm()
    }
}

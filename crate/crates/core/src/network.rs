//! Weighted adjacency matrices: validation, powers, spectral quantities,
//! topology generators and the distributed `ν̄` precomputation.

use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::IteratorRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

const STOCHASTIC_TOL: f64 = 1e-10;
const SYMMETRY_TOL: f64 = 1e-12;

/// A row-stochastic `N×N` matrix `P`; `P_ij` is the weight agent `i` gives to
/// agent `j`.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    p: DMatrix<f64>,
}

/// Spectral facts about a network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    /// Largest singular value `‖P‖₂`.
    pub operator_norm: f64,
    /// Largest eigenvalue modulus once one eigenvalue closest to 1 is removed.
    pub mu: f64,
    pub symmetric: bool,
    pub doubly_stochastic: bool,
    pub primitive: bool,
    /// `‖P‖` in the norm weighted by the stationary distribution `π`, i.e.
    /// `‖Π^{1/2} P Π^{-1/2}‖₂`. Equal to 1 for reversible chains. `None` when
    /// `π` is not unique and positive.
    pub stationary_norm: Option<f64>,
}

impl Network {
    pub fn new(p: DMatrix<f64>) -> Result<Self> {
        if !p.is_square() || p.nrows() == 0 {
            return Err(Error::InvalidNetwork(format!(
                "expected a nonempty square matrix, got {}x{}",
                p.nrows(),
                p.ncols()
            )));
        }
        if let Some(v) = p.iter().find(|v| !(-1e-12..=1.0 + 1e-12).contains(*v)) {
            return Err(Error::InvalidNetwork(format!("entry {v} outside [0, 1]")));
        }
        for (i, row) in p.row_iter().enumerate() {
            let s = row.sum();
            if (s - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::InvalidNetwork(format!("row {i} sums to {s}")));
            }
        }
        Ok(Self { p })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(linalg::matrix_from_rows(rows)?)
    }

    /// `(1/N)𝟙𝟙ᵀ`, the central coordinator.
    pub fn averaging(n: usize) -> Self {
        assert!(n > 0);
        Self {
            p: DMatrix::from_element(n, n, 1.0 / n as f64),
        }
    }

    /// Metropolis–Hastings weights for an undirected graph:
    /// `P_ij = 1/(1 + max(dᵢ, dⱼ))` on edges, remainder on the diagonal.
    pub fn metropolis(adjacency: &[Vec<bool>]) -> Result<Self> {
        let n = adjacency.len();
        for (i, row) in adjacency.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: row.len(),
                });
            }
            if (0..n).any(|j| row[j] != adjacency[j][i]) {
                return Err(Error::InvalidNetwork("adjacency is not symmetric".into()));
            }
        }
        let deg: Vec<usize> = (0..n)
            .map(|i| (0..n).filter(|&j| j != i && adjacency[i][j]).count())
            .collect();
        let mut p = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                if i != j && adjacency[i][j] {
                    p[(i, j)] = 1.0 / (1 + deg[i].max(deg[j])) as f64;
                }
            }
            p[(i, i)] = 1.0 - p.row(i).sum();
        }
        Self::new(p)
    }

    pub fn size(&self) -> usize {
        self.p.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.p
    }

    /// `P^ν` by repeated squaring; `P⁰ = I`.
    pub fn power(&self, nu: usize) -> DMatrix<f64> {
        let mut result = DMatrix::identity(self.size(), self.size());
        let mut base = self.p.clone();
        let mut e = nu;
        while e > 0 {
            if e & 1 == 1 {
                result = &result * &base;
            }
            e >>= 1;
            if e > 0 {
                base = &base * &base;
            }
        }
        result
    }

    pub fn is_symmetric(&self) -> bool {
        linalg::is_symmetric(&self.p, SYMMETRY_TOL)
    }

    pub fn is_doubly_stochastic(&self) -> bool {
        self.p
            .column_iter()
            .all(|c| (c.sum() - 1.0).abs() <= STOCHASTIC_TOL)
    }

    /// Some power of `P` is elementwise positive. Checked on the boolean
    /// pattern up to the Wielandt bound `N² − 2N + 2`; a positive power stays
    /// positive since `P` has no zero rows.
    pub fn is_primitive(&self) -> bool {
        let n = self.size();
        let bound = n * n - 2 * n + 2;
        let mut pattern: Vec<Vec<bool>> = (0..n)
            .map(|i| (0..n).map(|j| self.p[(i, j)] > 0.0).collect())
            .collect();
        let mut reached = 1;
        while reached < bound {
            pattern = bool_square(&pattern);
            reached *= 2;
        }
        pattern.iter().all(|r| r.iter().all(|&b| b))
    }

    pub fn operator_norm(&self) -> f64 {
        linalg::spectral_norm(&self.p)
    }

    /// `μ`: the spectral radius left after discarding one eigenvalue nearest 1.
    pub fn mu(&self) -> f64 {
        let n = self.size();
        if n == 1 {
            return 0.0;
        }
        // (distance to 1, modulus)
        let eig: Vec<(f64, f64)> = if self.is_symmetric() {
            SymmetricEigen::new(linalg::sym(&self.p))
                .eigenvalues
                .iter()
                .map(|&l| ((l - 1.0).abs(), l.abs()))
                .collect()
        } else {
            linalg::complex_eigenvalues(&self.p)
                .iter()
                .map(|l| ((l - 1.0).norm(), l.norm()))
                .collect()
        };
        let drop = eig
            .iter()
            .enumerate()
            .min_by(|a, b| a.1 .0.total_cmp(&b.1 .0))
            .map(|(k, _)| k)
            .unwrap_or(0);
        eig.iter()
            .enumerate()
            .filter(|&(k, _)| k != drop)
            .map(|(_, e)| e.1)
            .fold(0.0, f64::max)
    }

    /// The unique stationary distribution `πᵀP = πᵀ`, if it exists and is
    /// strictly positive.
    pub fn stationary_distribution(&self) -> Option<DVector<f64>> {
        let n = self.size();
        let mut a = DMatrix::zeros(n + 1, n);
        a.view_mut((0, 0), (n, n))
            .copy_from(&(self.p.transpose() - DMatrix::identity(n, n)));
        a.row_mut(n).fill(1.0);
        let mut rhs = DVector::zeros(n + 1);
        rhs[n] = 1.0;
        let svd = a.clone().svd(true, true);
        if svd.singular_values.min() <= 1e-10 {
            return None;
        }
        let pi = svd.solve(&rhs, 1e-14).ok()?;
        if (&a * &pi - &rhs).amax() > 1e-9 || pi.iter().any(|&v| v <= 0.0) {
            return None;
        }
        Some(pi)
    }

    pub fn certify(&self) -> SpectralReport {
        let stationary_norm = self.stationary_distribution().map(|pi| {
            let n = self.size();
            let w = DMatrix::from_fn(n, n, |i, j| (pi[i] / pi[j]).sqrt() * self.p[(i, j)]);
            linalg::spectral_norm(&w)
        });
        SpectralReport {
            operator_norm: self.operator_norm(),
            mu: self.mu(),
            symmetric: self.is_symmetric(),
            doubly_stochastic: self.is_doubly_stochastic(),
            primitive: self.is_primitive(),
            stationary_norm,
        }
    }

    /// True iff every diagonal entry of `P^ν` is at most `1e-12`.
    pub fn check_no_cycles(&self, nu: usize) -> Result<bool> {
        if nu == 0 {
            return Err(Error::Precondition("ν must be at least 1".into()));
        }
        Ok(self.power(nu).diagonal().iter().all(|&d| d <= 1e-12))
    }

    /// `‖P^ν − (1/N)𝟙𝟙ᵀ‖_∞`.
    pub fn consensus_error(&self, nu: usize) -> f64 {
        deviation_from_average(&self.power(nu))
    }

    /// Emulates the distributed precomputation of `ν̄`.
    ///
    /// Round `k`: agent `i` builds row `i` of `P^{k+1}` from the rows of `P^k`
    /// held by its neighbours, raises its flag when
    /// `Σ_j |P^{k+1}_ij − 1/N| < ε_d`, then runs `N` rounds of min-consensus on
    /// the flags over its in-neighbourhood and itself. The first `k + 1` at
    /// which every flag survives is returned.
    pub fn precompute_nu_bar(&self, eps_d: f64, max_nu: usize) -> Result<usize> {
        if !(eps_d > 0.0) {
            return Err(Error::Precondition("ε_d must be positive".into()));
        }
        let n = self.size();
        let inv_n = 1.0 / n as f64;
        let neighbours: Vec<Vec<usize>> = (0..n)
            .map(|i| (0..n).filter(|&h| self.p[(i, h)] > 0.0).collect())
            .collect();
        let mut rows = DMatrix::<f64>::identity(n, n);
        for k in 0..max_nu {
            rows = DMatrix::from_fn(n, n, |i, j| {
                neighbours[i]
                    .iter()
                    .map(|&h| self.p[(i, h)] * rows[(h, j)])
                    .sum()
            });
            let mut flags: Vec<bool> = (0..n)
                .map(|i| rows.row(i).iter().map(|v| (v - inv_n).abs()).sum::<f64>() < eps_d)
                .collect();
            for _ in 0..n {
                flags = (0..n)
                    .map(|i| flags[i] && neighbours[i].iter().all(|&j| flags[j]))
                    .collect();
            }
            if flags.iter().all(|&f| f) {
                return Ok(k + 1);
            }
        }
        Err(Error::NoConvergence { max_nu })
    }

    /// `P ⊗ (1/B)𝟙_B𝟙_Bᵀ`: each agent becomes a fully mixed cluster of `B`.
    pub fn hierarchical(&self, b: usize) -> Result<Self> {
        if b == 0 {
            return Err(Error::Precondition("cluster size B must be at least 1".into()));
        }
        let block = DMatrix::from_element(b, b, 1.0 / b as f64);
        Self::new(self.p.kronecker(&block))
    }

    /// Drops self-weights and renormalizes each row: `D⁻¹(P − diag P)` with
    /// `D = I − diag P`.
    pub fn without_self_loops(&self) -> Result<Self> {
        let n = self.size();
        let mut p = self.p.clone();
        for i in 0..n {
            let rest = 1.0 - p[(i, i)];
            if rest <= 1e-12 {
                return Err(Error::InvalidNetwork(format!(
                    "agent {i} listens only to itself"
                )));
            }
            p[(i, i)] = 0.0;
            p.row_mut(i).scale_mut(1.0 / rest);
        }
        Self::new(p)
    }

    /// Reads a dense, header-free CSV matrix.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_path(path)?;
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record?;
            let row = record
                .iter()
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|e| Error::InvalidNetwork(format!("bad entry {s:?}: {e}")))
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Self::from_rows(&rows)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut writer = csv::WriterBuilder::new()
            .has_headers(false)
            .from_path(path)?;
        for row in self.p.row_iter() {
            writer.write_record(row.iter().map(|v| v.to_string()))?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// `max_i Σ_j |m_ij − 1/N|`.
pub(crate) fn deviation_from_average(m: &DMatrix<f64>) -> f64 {
    let inv_n = 1.0 / m.ncols() as f64;
    m.row_iter()
        .map(|r| r.iter().map(|v| (v - inv_n).abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn bool_square(a: &[Vec<bool>]) -> Vec<Vec<bool>> {
    let n = a.len();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| (0..n).any(|k| a[i][k] && a[k][j]))
                .collect()
        })
        .collect()
}

/// Network generators.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Topology {
    /// Complete graph without self-loops, weights `1/(N−1)`.
    CompleteNoSelf,
    /// `P_{i,i+1} = 1` (indices mod `N`).
    DirectedRing,
    /// Ring with Metropolis–Hastings weights.
    UndirectedRing,
    /// Undirected ring plus random shortcuts, Metropolis–Hastings weights.
    /// Every agent adds, with probability `p_shortcut`, one link to an agent
    /// drawn uniformly among those it is not yet linked to.
    SmallWorld { p_shortcut: f64 },
    /// `(1/N)𝟙𝟙ᵀ`.
    Averaging,
}

impl Topology {
    pub fn name(&self) -> &'static str {
        match self {
            Topology::CompleteNoSelf => "complete",
            Topology::DirectedRing => "directed_ring",
            Topology::UndirectedRing => "undirected_ring",
            Topology::SmallWorld { .. } => "small_world",
            Topology::Averaging => "averaging",
        }
    }

    pub fn generate(&self, n: usize, seed: u64) -> Result<Network> {
        if n < 2 {
            return Err(Error::Precondition("topologies need N ≥ 2".into()));
        }
        match *self {
            Topology::CompleteNoSelf => {
                let w = 1.0 / (n - 1) as f64;
                Network::new(DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { w }))
            }
            Topology::DirectedRing => Network::new(DMatrix::from_fn(n, n, |i, j| {
                if j == (i + 1) % n {
                    1.0
                } else {
                    0.0
                }
            })),
            Topology::UndirectedRing => Network::metropolis(&ring_adjacency(n)),
            Topology::SmallWorld { p_shortcut } => {
                if !(0.0..=1.0).contains(&p_shortcut) {
                    return Err(Error::Precondition("p_shortcut must lie in [0, 1]".into()));
                }
                let mut adj = ring_adjacency(n);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                for i in 0..n {
                    if rng.random::<f64>() < p_shortcut {
                        let target = (0..n).filter(|&j| j != i && !adj[i][j]).choose(&mut rng);
                        if let Some(j) = target {
                            adj[i][j] = true;
                            adj[j][i] = true;
                        }
                    }
                }
                Network::metropolis(&adj)
            }
            Topology::Averaging => Ok(Network::averaging(n)),
        }
    }
}

fn ring_adjacency(n: usize) -> Vec<Vec<bool>> {
    let mut adj = vec![vec![false; n]; n];
    for i in 0..n {
        let j = (i + 1) % n;
        adj[i][j] = true;
        adj[j][i] = true;
    }
    adj
}

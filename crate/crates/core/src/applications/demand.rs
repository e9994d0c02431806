//! Demand response: agents shift consumption `u ∈ ℝ^T` away from a nominal
//! profile `û` in reaction to the price `p(σ) = λσ + p₀`.
//!
//! Agent `i` pays `ρᵢ‖u − ûⁱ‖² + p(σⁱ)ᵀu`, i.e. the quadratic game with
//! `qᵢ = ρᵢ`, `Q = I`, `C = (λ/2)I` and `cᵢ = p₀/2 − ρᵢûⁱ`.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{CostParams, GameSpec};
use crate::metric::SpdMatrix;
use crate::network::Network;
use crate::sets::{ConvexSet, PrimitiveSet};
use crate::signal::StackedSignal;

/// Curtailment weight for the plug-in electric vehicle preset: small enough
/// that agents follow the price rather than their nominal profile.
pub const PEV_RHO: f64 = 0.01;

/// Scalar load dynamics `s_{t+1} = a·s_t + γ·u_t` with state bounds
/// `s_min ≤ s_t ≤ s_max` for `t = 1, …, T`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoadDynamics {
    pub a: f64,
    pub gamma: f64,
    pub s0: f64,
    pub s_min: f64,
    pub s_max: f64,
}

impl LoadDynamics {
    /// The state bounds as halfspaces on `u`, by forward simulation
    /// `s_t = aᵗs₀ + Σ_{k<t} a^{t−1−k}γu_k`.
    fn halfspaces(&self, horizon: usize) -> Result<Vec<PrimitiveSet>> {
        if self.s_min > self.s_max {
            return Err(Error::InvalidGame("load dynamics with s_min > s_max".into()));
        }
        let mut out = Vec::new();
        for t in 1..=horizon {
            let free = self.a.powi(t as i32) * self.s0;
            let row = DVector::from_fn(horizon, |k, _| {
                if k < t {
                    self.a.powi((t - 1 - k) as i32) * self.gamma
                } else {
                    0.0
                }
            });
            if row.norm() == 0.0 {
                if free < self.s_min || free > self.s_max {
                    return Err(Error::InvalidGame(format!("state bound violated at t = {t}")));
                }
                continue;
            }
            out.push(PrimitiveSet::halfspace(row.clone(), self.s_max - free)?);
            out.push(PrimitiveSet::halfspace(-row, free - self.s_min)?);
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandResponseConfig {
    pub horizon: usize,
    pub rho: Vec<f64>,
    pub lambda_price: f64,
    /// Baseline consumption; the baseline price is `p₀ = λσ₀`.
    pub sigma0: Vec<f64>,
    pub u_hat: Vec<Vec<f64>>,
    /// Consumption windows `[start, end]`, 1-based and inclusive.
    pub windows: Vec<(usize, usize)>,
    #[serde(default)]
    pub dynamics: Option<Vec<LoadDynamics>>,
}

#[derive(Clone, Debug)]
pub struct DemandResponseGame {
    pub game: GameSpec,
    pub u_hat: StackedSignal,
}

/// Synthetic baseline consumption: low at night, a morning shoulder and an
/// evening peak, between roughly 0.3 and 1.0. Not measured data.
pub fn synthetic_sigma0(horizon: usize) -> DVector<f64> {
    DVector::from_fn(horizon, |t, _| {
        let h = 24.0 * (t as f64 + 0.5) / horizon as f64;
        let bump = |center: f64, width: f64| (-((h - center) / width).powi(2)).exp();
        0.3 + 0.35 * bump(8.5, 2.5) + 0.65 * bump(19.0, 3.0) + 0.1 * (PI * h / 24.0).sin()
    })
}

/// Reads a baseline consumption column (one value per line, no header).
pub fn read_sigma0_csv(path: impl AsRef<Path>) -> Result<DVector<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record?;
        let field = record
            .get(0)
            .ok_or_else(|| Error::InvalidConfig("empty σ₀ row".into()))?;
        values.push(
            field
                .parse::<f64>()
                .map_err(|e| Error::InvalidConfig(format!("bad σ₀ entry {field:?}: {e}")))?,
        );
    }
    if values.is_empty() {
        return Err(Error::InvalidConfig("σ₀ file is empty".into()));
    }
    Ok(DVector::from_vec(values))
}

impl DemandResponseConfig {
    /// Nominal profiles uniform in `[0, 1]^T`; window start uniform in
    /// `{1, …, T−1}`, end uniform in `{start+1, …, T}`.
    pub fn random(
        n_agents: usize,
        horizon: usize,
        rho: f64,
        lambda_price: f64,
        sigma0: &DVector<f64>,
        seed: u64,
    ) -> Self {
        assert!(horizon >= 2, "windows need at least two periods");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut u_hat = Vec::with_capacity(n_agents);
        let mut windows = Vec::with_capacity(n_agents);
        for _ in 0..n_agents {
            u_hat.push((0..horizon).map(|_| rng.random::<f64>()).collect());
            let start = rng.random_range(1..horizon);
            let end = rng.random_range(start + 1..=horizon);
            windows.push((start, end));
        }
        Self {
            horizon,
            rho: vec![rho; n_agents],
            lambda_price,
            sigma0: sigma0.iter().copied().collect(),
            u_hat,
            windows,
            dynamics: None,
        }
    }

    pub fn build(&self, net: Network) -> Result<DemandResponseGame> {
        let t_len = self.horizon;
        let n_agents = self.rho.len();
        if self.u_hat.len() != n_agents || self.windows.len() != n_agents {
            return Err(Error::InvalidGame(format!(
                "{} weights, {} nominal profiles, {} windows",
                n_agents,
                self.u_hat.len(),
                self.windows.len()
            )));
        }
        if self.sigma0.len() != t_len {
            return Err(Error::InvalidGame(format!(
                "σ₀ has {} entries for a horizon of {t_len}",
                self.sigma0.len()
            )));
        }
        if !(self.lambda_price > 0.0) {
            return Err(Error::InvalidGame("λ must be positive".into()));
        }
        if let Some(d) = &self.dynamics {
            if d.len() != n_agents {
                return Err(Error::InvalidGame("one load model per agent is required".into()));
            }
        }
        let p0 = DVector::from_vec(self.sigma0.clone()) * self.lambda_price;

        let mut sets = Vec::with_capacity(n_agents);
        let mut c = Vec::with_capacity(n_agents);
        for i in 0..n_agents {
            let u = DVector::from_vec(self.u_hat[i].clone());
            if u.len() != t_len {
                return Err(Error::InvalidGame(format!("profile {i} has length {}", u.len())));
            }
            let (start, end) = self.windows[i];
            if start < 1 || end > t_len || start > end {
                return Err(Error::InvalidGame(format!(
                    "agent {i}: empty window [{start}, {end}]"
                )));
            }
            let energy = u.sum();
            let hi = DVector::from_fn(t_len, |t, _| {
                if (start - 1..end).contains(&t) {
                    energy
                } else {
                    0.0
                }
            });
            let mut primitives = vec![
                PrimitiveSet::boxed(DVector::zeros(t_len), hi)?,
                PrimitiveSet::affine(DMatrix::from_element(1, t_len, 1.0), DVector::from_element(1, energy))?,
            ];
            if let Some(d) = &self.dynamics {
                primitives.extend(d[i].halfspaces(t_len)?);
            }
            sets.push(ConvexSet::new(primitives)?);
            c.push(&p0 * 0.5 - &u * self.rho[i]);
        }
        let costs = CostParams::new(
            SpdMatrix::identity(t_len),
            DMatrix::identity(t_len, t_len) * (self.lambda_price / 2.0),
            self.rho.clone(),
            c,
        )?;
        let u_hat = StackedSignal::from_matrix(DMatrix::from_fn(t_len, n_agents, |t, i| {
            self.u_hat[i][t]
        }));
        Ok(DemandResponseGame {
            game: GameSpec::new(costs, sets, net, 2)?,
            u_hat,
        })
    }
}

impl DemandResponseGame {
    /// The same population with `ν` communication rounds.
    pub fn with_nu(&self, nu: usize) -> Self {
        Self {
            game: self.game.with_nu(nu),
            u_hat: self.u_hat.clone(),
        }
    }
}

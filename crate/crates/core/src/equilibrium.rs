//! Nash quality of strategy profiles: best unilateral deviations, ε
//! certificates and a brute-force grid oracle for tiny games.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::game::GameSpec;
use crate::linalg;
use crate::metric::SpdMatrix;
use crate::network::Network;
use crate::sets::PrimitiveSet;
use crate::signal::StackedSignal;

const DEVIATION_TOL: f64 = 1e-9;
const DEVIATION_MAX_STEPS: usize = 100_000;
const CONVEXITY_TOL: f64 = 1e-12;

/// How a deviating agent's own strategy enters its aggregate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum DeviationMode {
    /// `σⁱ = P^ν_ii y + Σ_{j≠i} P^ν_ij x̄ʲ`.
    Network { nu: usize },
    /// `σⁱ = (y + Σ_{j≠i} x̄ʲ)/N`.
    MeanField,
}

impl DeviationMode {
    fn weights(&self, net: &Network) -> DMatrix<f64> {
        match self {
            Self::Network { nu } => net.power(*nu),
            Self::MeanField => {
                let n = net.size();
                DMatrix::from_element(n, n, 1.0 / n as f64)
            }
        }
    }
}

/// `εᵢ = J̄ⁱ − min_y Jⁱ(y, ·)` for every agent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NashCertificate {
    pub mode: String,
    pub nu: Option<usize>,
    pub per_agent_eps: Vec<f64>,
    pub max_eps: f64,
}

/// The deviation problem of agent `i`: minimize
/// `yᵀ(qᵢQ + 2w·sym C)y + 2(Cr + cᵢ)ᵀy` over `𝒳ⁱ`, where `w` is the
/// self-weight and `r` the fixed contribution of the others.
struct Deviation {
    w: f64,
    r: DVector<f64>,
    played_sigma: DVector<f64>,
}

fn deviation_data(
    weights: &DMatrix<f64>,
    i: usize,
    profile: &StackedSignal,
) -> Deviation {
    let w = weights[(i, i)];
    let played_sigma = profile.matrix() * weights.row(i).transpose();
    let r = &played_sigma - profile.matrix().column(i) * w;
    Deviation { w, r, played_sigma }
}

/// Best unilateral deviation of agent `i` from `profile`: `(y⋆, Jⁱ⋆)`.
pub fn best_deviation(
    game: &GameSpec,
    i: usize,
    profile: &StackedSignal,
    mode: DeviationMode,
) -> Result<(DVector<f64>, f64)> {
    check_profile(game, profile)?;
    if i >= game.population() {
        return Err(Error::AgentOutOfRange {
            index: i,
            population: game.population(),
        });
    }
    let weights = mode.weights(game.network());
    solve_deviation(game, i, profile, &deviation_data(&weights, i, profile))
}

fn check_profile(game: &GameSpec, profile: &StackedSignal) -> Result<()> {
    check_dim(game.population(), profile.population())?;
    check_dim(game.dim(), profile.dim())
}

fn solve_deviation(
    game: &GameSpec,
    i: usize,
    profile: &StackedSignal,
    dev: &Deviation,
) -> Result<(DVector<f64>, f64)> {
    if dev.w == 0.0 {
        let y = game.optimal_response(i, &dev.r)?;
        let v = game.cost(i, &y, &dev.r)?;
        return Ok((y, v));
    }
    let costs = game.costs();
    let h = costs.q_matrix.matrix() * costs.q[i] + linalg::sym(&costs.c_matrix) * (2.0 * dev.w);
    let eig = linalg::sym_eigenvalues(&h);
    if eig[0] < CONVEXITY_TOL {
        return Err(Error::Nonconvex(eig[0]));
    }
    let b = &costs.c_matrix * &dev.r + &costs.c[i];
    let lipschitz = 2.0 * eig[eig.len() - 1];
    let step = 1.0 / lipschitz;
    let euclid = game.sets()[i].projector(&SpdMatrix::identity(game.dim()))?;

    let played = profile.agent(i);
    let objective = |y: &DVector<f64>| -> Result<f64> { game.cost(i, y, &(y * dev.w + &dev.r)) };
    let mut y = played.clone();
    for _ in 0..DEVIATION_MAX_STEPS {
        let grad = (&h * &y + &b) * 2.0;
        let next = euclid.project(&(&y - grad * step))?;
        let moved = (&next - &y).amax();
        y = next;
        if moved <= DEVIATION_TOL {
            break;
        }
    }
    let value = objective(&y)?;
    let played_value = objective(&played)?;
    Ok(if value <= played_value {
        (y, value)
    } else {
        (played, played_value)
    })
}

/// ε of `profile` under `mode`, agent by agent.
pub fn certify_nash(
    game: &GameSpec,
    profile: &StackedSignal,
    mode: DeviationMode,
) -> Result<NashCertificate> {
    check_profile(game, profile)?;
    let weights = mode.weights(game.network());
    let eps_of = |i: usize| -> Result<f64> {
        let dev = deviation_data(&weights, i, profile);
        let played = game.cost(i, &profile.agent(i), &dev.played_sigma)?;
        let (_, best) = solve_deviation(game, i, profile, &dev)?;
        Ok(played - best)
    };
    let per_agent_eps: Vec<f64> = if game.population() >= 64 {
        (0..game.population())
            .into_par_iter()
            .map(eps_of)
            .collect::<Result<_>>()?
    } else {
        (0..game.population()).map(eps_of).collect::<Result<_>>()?
    };
    let max_eps = per_agent_eps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (mode, nu) = match mode {
        DeviationMode::Network { nu } => ("na".to_string(), Some(nu)),
        DeviationMode::MeanField => ("mf".to_string(), None),
    };
    Ok(NashCertificate {
        mode,
        nu,
        per_agent_eps,
        max_eps,
    })
}

/// Grid oracle for scalar games with at most four agents on intervals.
///
/// Agents take turns moving to their best grid point against the others
/// (self-weight included) until nobody moves; a repeated profile means the
/// grid dynamics cycle and no pure grid equilibrium was found.
pub fn brute_force_nash(game: &GameSpec, resolution: f64) -> Result<StackedSignal> {
    if game.dim() != 1 || game.population() > 4 {
        return Err(Error::TooLarge(format!(
            "grid oracle needs n = 1 and N ≤ 4, got n = {}, N = {}",
            game.dim(),
            game.population()
        )));
    }
    if !(resolution > 0.0) {
        return Err(Error::Precondition("grid resolution must be positive".into()));
    }
    let grids: Vec<Vec<f64>> = game
        .sets()
        .iter()
        .map(|set| {
            if !set.primitives().iter().all(|p| matches!(p, PrimitiveSet::Box { .. })) {
                return Err(Error::Unsupported("grid oracle needs box sets".into()));
            }
            let (lo, hi) = set.bounding_box().expect("boxes are bounded");
            let steps = ((hi[0] - lo[0]) / resolution).round() as usize;
            if steps > 10_000_000 {
                return Err(Error::TooLarge(format!("{steps} grid points")));
            }
            Ok((0..=steps)
                .map(|k| (lo[0] + k as f64 * resolution).min(hi[0]))
                .collect())
        })
        .collect::<Result<_>>()?;

    let weights = game.network().power(game.nu());
    let population = game.population();
    let mut idx: Vec<usize> = grids.iter().map(|g| g.len() / 2).collect();
    let profile_of = |idx: &[usize]| {
        StackedSignal::from_matrix(DMatrix::from_fn(1, population, |_, j| grids[j][idx[j]]))
    };
    let mut seen = HashSet::new();
    seen.insert(idx.clone());
    loop {
        let mut moved = false;
        for i in 0..population {
            let profile = profile_of(&idx);
            let dev = deviation_data(&weights, i, &profile);
            let value = |y: f64| -> Result<f64> {
                let y = DVector::from_element(1, y);
                game.cost(i, &y, &(&y * dev.w + &dev.r))
            };
            let current = value(grids[i][idx[i]])?;
            let mut best = (idx[i], current);
            for (k, &y) in grids[i].iter().enumerate() {
                let v = value(y)?;
                if v < best.1 - 1e-14 {
                    best = (k, v);
                }
            }
            if best.0 != idx[i] {
                idx[i] = best.0;
                moved = true;
            }
        }
        if !moved {
            return Ok(profile_of(&idx));
        }
        if !seen.insert(idx.clone()) {
            return Err(Error::NoGridEquilibrium(format!(
                "best-response sweeps revisit profile {idx:?}"
            )));
        }
    }
}

/// `(‖P^ν − (1/N)𝟙𝟙ᵀ‖_∞, √N μ^ν)` for a symmetric, doubly stochastic,
/// primitive network; the first never exceeds the second.
pub fn corollary1_pieces(net: &Network, nu: usize) -> Result<(f64, f64)> {
    let report = net.certify();
    if !(report.symmetric && report.doubly_stochastic && report.primitive) {
        return Err(Error::Precondition(
            "network must be symmetric, doubly stochastic and primitive".into(),
        ));
    }
    let error = net.consensus_error(nu);
    let bound = (net.size() as f64).sqrt() * report.mu.powi(nu as i32);
    if error > bound + 1e-9 {
        return Err(Error::Precondition(format!(
            "consensus error {error:e} exceeds √N μ^ν = {bound:e}"
        )));
    }
    Ok((error, bound))
}

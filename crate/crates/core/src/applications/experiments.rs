//! Experiment drivers: iteration counts of opinion dynamics across
//! populations and topologies, and the realized mean-field ε of demand
//! response across population sizes and communication rounds.
//!
//! Every (size, topology or ν, seed) cell is an independent deterministic
//! run; cells are evaluated in parallel and returned in a fixed order.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cell_seed;
use super::demand::{synthetic_sigma0, DemandResponseConfig};
use super::opinion::{OpinionConfig, OpinionPopulation};
use crate::equilibrium::{certify_nash, DeviationMode};
use crate::error::{Error, Result};
use crate::iterations::{self, FeedbackScheme, SplitCounts, StoppingRule};
use crate::network::{Network, Topology};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpinionExperiment {
    pub populations: Vec<OpinionPopulation>,
    pub sizes: Vec<usize>,
    pub topologies: Vec<Topology>,
    pub seeds: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "one")]
    pub theta: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "two")]
    pub topics: usize,
    #[serde(default = "default_opinion_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn one() -> f64 {
    1.0
}
fn two() -> usize {
    2
}
fn default_delta() -> f64 {
    0.3
}
fn default_opinion_tol() -> f64 {
    1e-5
}
fn default_max_iter() -> usize {
    10_000
}

impl Default for OpinionExperiment {
    fn default() -> Self {
        Self {
            populations: vec![OpinionPopulation::StubbornOnly, OpinionPopulation::HalfFollowers],
            sizes: vec![10, 20, 30, 40, 50, 60, 70, 80, 90, 100],
            topologies: vec![
                Topology::CompleteNoSelf,
                Topology::DirectedRing,
                Topology::SmallWorld { p_shortcut: 0.3 },
            ],
            seeds: 50,
            base_seed: 0,
            theta: one(),
            delta: default_delta(),
            topics: two(),
            tol: default_opinion_tol(),
            max_iter: default_max_iter(),
        }
    }
}

/// Scheme used for each population: memoryless best responses when every
/// agent is stubborn, Krasnoselskij with `λ = 1/2` once followers are present.
pub fn opinion_scheme(population: OpinionPopulation) -> FeedbackScheme {
    match population {
        OpinionPopulation::StubbornOnly => FeedbackScheme::PicardBanach,
        OpinionPopulation::HalfFollowers => FeedbackScheme::krasnoselskij(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpinionRow {
    pub population: String,
    pub scheme: String,
    pub n_agents: usize,
    pub topology: String,
    pub seed: u64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OpinionSummary {
    pub population: String,
    pub topology: String,
    pub n_agents: usize,
    pub runs: usize,
    pub converged: usize,
    pub mean_iterations: f64,
    pub q05: f64,
    pub q95: f64,
}

/// One opinion run: network and population drawn from `seed`, initial
/// reference `P x₀`.
pub fn opinion_cell(
    cfg: &OpinionExperiment,
    population: OpinionPopulation,
    topology: Topology,
    n_agents: usize,
    seed: u64,
) -> Result<OpinionRow> {
    let net = topology.generate(n_agents, cell_seed(seed, &[0]))?;
    let og = OpinionConfig::random(
        population,
        n_agents,
        cfg.topics,
        cfg.theta,
        Some(cfg.delta),
        cell_seed(seed, &[1]),
    )
    .build(&net)?;
    let scheme = opinion_scheme(population);
    let z0 = og.x0.mix(og.game.network().matrix());
    let stop = StoppingRule::signal_delta(cfg.tol).with_max_iter(cfg.max_iter);
    let r = iterations::run(&og.game, &scheme, SplitCounts::memoryless(1), &stop, &z0, false)?;
    Ok(OpinionRow {
        population: population.name().into(),
        scheme: scheme.name().into(),
        n_agents,
        topology: topology.name().into(),
        seed,
        iterations: r.iterations,
        converged: r.converged,
    })
}

pub fn run_opinion_experiment(cfg: &OpinionExperiment) -> Result<Vec<OpinionRow>> {
    let mut cells = Vec::new();
    for (pi, &population) in cfg.populations.iter().enumerate() {
        for (ti, &topology) in cfg.topologies.iter().enumerate() {
            for &n in &cfg.sizes {
                for s in 0..cfg.seeds as u64 {
                    let seed = cell_seed(cfg.base_seed, &[pi as u64, ti as u64, n as u64, s]);
                    cells.push((population, topology, n, seed));
                }
            }
        }
    }
    cells
        .into_par_iter()
        .map(|(p, t, n, seed)| opinion_cell(cfg, p, t, n, seed))
        .collect()
}

/// Groups rows by (population, topology, N), in first-appearance order.
pub fn summarize_opinion(rows: &[OpinionRow]) -> Vec<OpinionSummary> {
    let mut keys: Vec<(String, String, usize)> = Vec::new();
    for r in rows {
        let key = (r.population.clone(), r.topology.clone(), r.n_agents);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(population, topology, n_agents)| {
            let group: Vec<&OpinionRow> = rows
                .iter()
                .filter(|r| r.population == population && r.topology == topology && r.n_agents == n_agents)
                .collect();
            let iters: Vec<f64> = group.iter().map(|r| r.iterations as f64).collect();
            OpinionSummary {
                runs: group.len(),
                converged: group.iter().filter(|r| r.converged).count(),
                mean_iterations: mean(&iters),
                q05: quantile(&iters, 0.05),
                q95: quantile(&iters, 0.95),
                population,
                topology,
                n_agents,
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandExperiment {
    /// Population sizes; each must be a multiple of `clusters`.
    pub sizes: Vec<usize>,
    /// Communication rounds; each must be even.
    pub nus: Vec<usize>,
    #[serde(default = "five")]
    pub clusters: usize,
    pub seeds: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_lambda_price")]
    pub lambda_price: f64,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    /// Baseline consumption; the synthetic curve when absent.
    #[serde(default)]
    pub sigma0: Option<Vec<f64>>,
    #[serde(default = "default_gap_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_mann")]
    pub scheme: FeedbackScheme,
    #[serde(default = "yes")]
    pub central_baseline: bool,
}

fn five() -> usize {
    5
}
fn default_rho() -> f64 {
    0.1
}
fn default_lambda_price() -> f64 {
    2.0
}
fn default_horizon() -> usize {
    24
}
fn default_gap_tol() -> f64 {
    1e-3
}
fn default_mann() -> FeedbackScheme {
    FeedbackScheme::mann()
}
fn yes() -> bool {
    true
}

impl Default for DemandExperiment {
    fn default() -> Self {
        Self {
            sizes: vec![10, 20, 40],
            nus: vec![2, 10, 50],
            clusters: five(),
            seeds: 5,
            base_seed: 0,
            rho: default_rho(),
            lambda_price: default_lambda_price(),
            horizon: default_horizon(),
            sigma0: None,
            tol: default_gap_tol(),
            max_iter: default_max_iter(),
            scheme: default_mann(),
            central_baseline: true,
        }
    }
}

impl DemandExperiment {
    pub fn sigma0(&self) -> Result<DVector<f64>> {
        match &self.sigma0 {
            Some(v) if v.len() == self.horizon => Ok(DVector::from_vec(v.clone())),
            Some(v) => Err(Error::InvalidConfig(format!(
                "σ₀ has {} entries for a horizon of {}",
                v.len(),
                self.horizon
            ))),
            None => Ok(synthetic_sigma0(self.horizon)),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.clusters < 2 {
            return Err(Error::InvalidConfig("at least two clusters are needed".into()));
        }
        if let Some(n) = self.sizes.iter().find(|&&n| n == 0 || n % self.clusters != 0) {
            return Err(Error::InvalidConfig(format!(
                "N = {n} is not a positive multiple of {} clusters",
                self.clusters
            )));
        }
        if let Some(nu) = self.nus.iter().find(|&&nu| nu == 0 || nu % 2 != 0) {
            return Err(Error::InvalidConfig(format!("ν = {nu} must be even and positive")));
        }
        self.scheme.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemandRow {
    pub n_agents: usize,
    /// `None` for the centrally coordinated baseline.
    pub nu: Option<usize>,
    pub seed: u64,
    pub iterations: usize,
    pub converged: bool,
    pub max_eps: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DemandSummary {
    pub n_agents: usize,
    pub nu: Option<usize>,
    pub runs: usize,
    pub converged: usize,
    pub mean_iterations: f64,
    pub mean_max_eps: f64,
}

/// One demand-response run on the hierarchical ring (`nu = Some`) or on the
/// exact average (`nu = None`), certified against mean-field deviations.
pub fn demand_cell(
    cfg: &DemandExperiment,
    sigma0: &DVector<f64>,
    n_agents: usize,
    nu: Option<usize>,
    seed: u64,
) -> Result<DemandRow> {
    let population = DemandResponseConfig::random(
        n_agents,
        cfg.horizon,
        cfg.rho,
        cfg.lambda_price,
        sigma0,
        seed,
    );
    let (net, rounds) = match nu {
        Some(nu) => (
            Topology::UndirectedRing
                .generate(cfg.clusters, 0)?
                .hierarchical(n_agents / cfg.clusters)?,
            nu,
        ),
        None => (Network::averaging(n_agents), 2),
    };
    let dr = population.build(net)?.with_nu(rounds);
    let stop = StoppingRule::fixed_point_gap(cfg.tol).with_max_iter(cfg.max_iter);
    let r = iterations::run(
        &dr.game,
        &cfg.scheme,
        SplitCounts::symmetric(rounds)?,
        &stop,
        &dr.u_hat,
        false,
    )?;
    let cert = certify_nash(&dr.game, &r.final_strategies, DeviationMode::MeanField)?;
    Ok(DemandRow {
        n_agents,
        nu,
        seed,
        iterations: r.iterations,
        converged: r.converged,
        max_eps: cert.max_eps,
    })
}

/// Cells are ordered by N, then ν (baseline last), then seed. The same seed
/// draws the same population for every ν.
pub fn run_demand_experiment(cfg: &DemandExperiment) -> Result<Vec<DemandRow>> {
    cfg.validate()?;
    let sigma0 = cfg.sigma0()?;
    let mut nus: Vec<Option<usize>> = cfg.nus.iter().map(|&nu| Some(nu)).collect();
    if cfg.central_baseline {
        nus.push(None);
    }
    let mut cells = Vec::new();
    for &n in &cfg.sizes {
        for &nu in &nus {
            for s in 0..cfg.seeds as u64 {
                cells.push((n, nu, cell_seed(cfg.base_seed, &[n as u64, s])));
            }
        }
    }
    cells
        .into_par_iter()
        .map(|(n, nu, seed)| demand_cell(cfg, &sigma0, n, nu, seed))
        .collect()
}

pub fn summarize_demand(rows: &[DemandRow]) -> Vec<DemandSummary> {
    let mut keys: Vec<(usize, Option<usize>)> = Vec::new();
    for r in rows {
        if !keys.contains(&(r.n_agents, r.nu)) {
            keys.push((r.n_agents, r.nu));
        }
    }
    keys.into_iter()
        .map(|(n_agents, nu)| {
            let group: Vec<&DemandRow> = rows
                .iter()
                .filter(|r| r.n_agents == n_agents && r.nu == nu)
                .collect();
            let iters: Vec<f64> = group.iter().map(|r| r.iterations as f64).collect();
            let eps: Vec<f64> = group.iter().map(|r| r.max_eps).collect();
            DemandSummary {
                n_agents,
                nu,
                runs: group.len(),
                converged: group.iter().filter(|r| r.converged).count(),
                mean_iterations: mean(&iters),
                mean_max_eps: mean(&eps),
            }
        })
        .collect()
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        f64::NAN
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Quantile with linear interpolation between order statistics.
pub fn quantile(xs: &[f64], p: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let h = p.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

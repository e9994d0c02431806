//! TOML configuration: what to build, how to iterate, where to write.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use nagame::applications::demand::{read_sigma0_csv, synthetic_sigma0, PEV_RHO};
use nagame::applications::experiments::{DemandExperiment, OpinionExperiment};
use nagame::applications::{
    DemandResponseConfig, LoadDynamics, OpinionConfig, OpinionPopulation,
};
use nagame::{
    FeedbackScheme, GameDescription, GameSpec, Network, ResidualKind, SplitCounts, StackedSignal,
    StoppingRule, Topology,
};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub game: Option<GameSection>,
    #[serde(default)]
    pub network: Option<NetworkSection>,
    #[serde(default)]
    pub scheme: Option<SchemeSection>,
    #[serde(default)]
    pub stopping: Option<StoppingSection>,
    /// Initial signal, one list per agent.
    #[serde(default)]
    pub z0: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GameSection {
    Opinion(OpinionSection),
    DemandResponse(DemandSection),
    Raw(RawSection),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpinionSection {
    /// Agent-by-agent data; otherwise a random population is drawn.
    #[serde(default)]
    pub explicit: Option<OpinionConfig>,
    #[serde(default)]
    pub agents: Option<usize>,
    #[serde(default = "two")]
    pub topics: usize,
    #[serde(default = "stubborn_only")]
    pub population: OpinionPopulation,
    #[serde(default = "one")]
    pub theta: f64,
    #[serde(default)]
    pub delta: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DemandPreset {
    /// Plug-in electric vehicles: small curtailment weight.
    Pev,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandSection {
    #[serde(default)]
    pub explicit: Option<DemandResponseConfig>,
    #[serde(default)]
    pub agents: Option<usize>,
    #[serde(default = "horizon")]
    pub horizon: usize,
    #[serde(default)]
    pub rho: Option<f64>,
    #[serde(default = "lambda_price")]
    pub lambda_price: f64,
    #[serde(default)]
    pub preset: Option<DemandPreset>,
    /// One value per period, header-free; the synthetic curve when absent.
    #[serde(default)]
    pub sigma0_csv: Option<PathBuf>,
    /// Load model shared by every agent.
    #[serde(default)]
    pub dynamics: Option<LoadDynamics>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSection {
    pub description: GameDescription,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    #[serde(default)]
    pub topology: Option<Topology>,
    #[serde(default)]
    pub csv: Option<PathBuf>,
    /// Number of nodes of the generated network (before clustering).
    #[serde(default)]
    pub size: Option<usize>,
    /// Replace every node by a fully mixed cluster of this many agents.
    #[serde(default)]
    pub clusters: Option<usize>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSection {
    #[serde(default)]
    pub feedback: Option<FeedbackScheme>,
    #[serde(default)]
    pub nu1: Option<usize>,
    #[serde(default)]
    pub nu2: Option<usize>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoppingSection {
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub kind: Option<ResidualKind>,
    #[serde(default)]
    pub max_iter: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    Opinion,
    Demand,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub experiment: SweepKind,
    #[serde(default)]
    pub opinion: Option<OpinionExperiment>,
    #[serde(default)]
    pub demand: Option<DemandExperiment>,
    #[serde(default)]
    pub sigma0_csv: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "out_dir")]
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: out_dir() }
    }
}

fn two() -> usize {
    2
}
fn one() -> f64 {
    1.0
}
fn stubborn_only() -> OpinionPopulation {
    OpinionPopulation::StubbornOnly
}
fn horizon() -> usize {
    24
}
fn lambda_price() -> f64 {
    2.0
}
fn out_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Everything `run` and `certify` need.
pub struct Prepared {
    pub game: GameSpec,
    pub scheme: FeedbackScheme,
    pub split: SplitCounts,
    pub stop: StoppingRule,
    pub z0: StackedSignal,
}

impl ExperimentConfig {
    /// Parses a file; relative paths inside are taken relative to it.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read {}", path.display()))?;
        let mut cfg: Self =
            toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.check_files()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(n) = self.network.as_mut() {
            n.csv.as_mut().map(fix);
        }
        if let Some(GameSection::DemandResponse(d)) = self.game.as_mut() {
            d.sigma0_csv.as_mut().map(fix);
        }
        if let Some(s) = self.sweep.as_mut() {
            s.sigma0_csv.as_mut().map(fix);
        }
        fix(&mut self.output.dir);
    }

    fn check_files(&self) -> Result<()> {
        let mut files = Vec::new();
        if let Some(p) = self.network.as_ref().and_then(|n| n.csv.as_ref()) {
            files.push(p);
        }
        if let Some(GameSection::DemandResponse(d)) = &self.game {
            files.extend(d.sigma0_csv.as_ref());
        }
        if let Some(s) = &self.sweep {
            files.extend(s.sigma0_csv.as_ref());
        }
        for f in files {
            if !f.is_file() {
                bail!("referenced file {} does not exist", f.display());
            }
        }
        Ok(())
    }

    pub fn prepare(&self, seed: u64) -> Result<Prepared> {
        let game = self
            .game
            .as_ref()
            .context("the config has no [game] section")?;
        let scheme_cfg = self.scheme.clone().unwrap_or_default();
        let (default_scheme, default_split, default_stop) = match game {
            GameSection::DemandResponse(_) => (
                FeedbackScheme::mann(),
                SplitCounts { nu1: 1, nu2: 1 },
                StoppingRule::fixed_point_gap(1e-3),
            ),
            _ => (
                FeedbackScheme::PicardBanach,
                SplitCounts::memoryless(1),
                StoppingRule::signal_delta(1e-5),
            ),
        };
        let scheme = scheme_cfg.feedback.unwrap_or(default_scheme);
        scheme.validate()?;
        let split = SplitCounts {
            nu1: scheme_cfg.nu1.unwrap_or(default_split.nu1),
            nu2: scheme_cfg.nu2.unwrap_or(default_split.nu2),
        };
        if split.total() == 0 {
            bail!("ν₁ + ν₂ must be at least 1");
        }
        let st = self.stopping.clone().unwrap_or_default();
        let stop = StoppingRule {
            tol: st.tol.unwrap_or(default_stop.tol),
            kind: st.kind.unwrap_or(default_stop.kind),
            max_iter: st.max_iter.unwrap_or(default_stop.max_iter),
        };
        let network_seed = seed;
        let population_seed = seed ^ 0x5DEE_CE66_D1CE_5EED;

        let (game, z0) = match game {
            GameSection::Opinion(o) => {
                let cfg = match &o.explicit {
                    Some(c) => c.clone(),
                    None => OpinionConfig::random(
                        o.population,
                        o.agents.context("opinion games need `agents` or `explicit`")?,
                        o.topics,
                        o.theta,
                        o.delta,
                        population_seed,
                    ),
                };
                let net = self.network(cfg.kinds.len(), Topology::CompleteNoSelf, network_seed)?;
                let og = cfg.build(&net)?;
                let z0 = og.x0.mix(og.game.network().matrix());
                (og.game.with_nu(split.total()), z0)
            }
            GameSection::DemandResponse(d) => {
                let sigma0 = match &d.sigma0_csv {
                    Some(p) => read_sigma0_csv(p)?,
                    None => synthetic_sigma0(d.horizon),
                };
                let mut cfg = match &d.explicit {
                    Some(c) => c.clone(),
                    None => {
                        let rho = match (d.preset, d.rho) {
                            (_, Some(r)) => r,
                            (Some(DemandPreset::Pev), None) => PEV_RHO,
                            (None, None) => 0.1,
                        };
                        DemandResponseConfig::random(
                            d.agents.context("demand response needs `agents` or `explicit`")?,
                            d.horizon,
                            rho,
                            d.lambda_price,
                            &sigma0,
                            population_seed,
                        )
                    }
                };
                if let Some(dyn_) = d.dynamics {
                    cfg.dynamics = Some(vec![dyn_; cfg.rho.len()]);
                }
                let n_agents = cfg.rho.len();
                let net = self.demand_network(n_agents)?;
                let dr = cfg.build(net)?.with_nu(split.total());
                let z0 = dr.u_hat.clone();
                (dr.game, z0)
            }
            GameSection::Raw(r) => {
                let net = self.raw_network(network_seed)?;
                let n = r.description.q_matrix.len();
                let population = net.size();
                let game = r.description.build(net, split.total())?;
                (game, StackedSignal::zeros(n, population))
            }
        };
        let z0 = match &self.z0 {
            Some(rows) => {
                let agents: Vec<DVector<f64>> =
                    rows.iter().map(|r| DVector::from_vec(r.clone())).collect();
                let z = StackedSignal::from_agents(&agents)?;
                if z.dim() != game.dim() || z.population() != game.population() {
                    bail!(
                        "z0 is {}×{}, the game needs {} agents of dimension {}",
                        z.population(),
                        z.dim(),
                        game.population(),
                        game.dim()
                    );
                }
                z
            }
            None => z0,
        };
        Ok(Prepared {
            game,
            scheme,
            split,
            stop,
            z0,
        })
    }

    /// The configured network for `population` agents, `fallback` when the
    /// section is absent.
    fn network(&self, population: usize, fallback: Topology, seed: u64) -> Result<Network> {
        let section = self.network.clone().unwrap_or_default();
        let b = section.clusters.unwrap_or(1);
        if b == 0 || !population.is_multiple_of(b) {
            bail!("{population} agents cannot be split into clusters of {b}");
        }
        let base = match (&section.csv, section.topology) {
            (Some(_), Some(_)) => bail!("give either `network.csv` or `network.topology`, not both"),
            (Some(path), None) => Network::read_csv(path)
                .with_context(|| format!("cannot read network {}", path.display()))?,
            (None, t) => t
                .unwrap_or(fallback)
                .generate(section.size.unwrap_or(population / b), seed)?,
        };
        let net = if b > 1 { base.hierarchical(b)? } else { base };
        if net.size() != population {
            bail!("the network has {} agents, the game {population}", net.size());
        }
        Ok(net)
    }

    fn demand_network(&self, population: usize) -> Result<Network> {
        match &self.network {
            Some(_) => self.network(population, Topology::UndirectedRing, 0),
            None => {
                if !population.is_multiple_of(5) {
                    bail!("the default network needs a multiple of 5 agents");
                }
                Ok(Topology::UndirectedRing.generate(5, 0)?.hierarchical(population / 5)?)
            }
        }
    }

    fn raw_network(&self, seed: u64) -> Result<Network> {
        let section = self
            .network
            .as_ref()
            .context("raw games need a [network] section")?;
        let b = section.clusters.unwrap_or(1);
        let population = match (&section.csv, section.size) {
            (Some(path), _) => Network::read_csv(path)?.size() * b,
            (None, Some(n)) => n * b,
            (None, None) => bail!("raw games need `network.csv` or `network.size`"),
        };
        self.network(population, Topology::CompleteNoSelf, seed)
    }

    /// Experiment parameters for `sweep`, with the seed override applied.
    pub fn sweep(&self, seed: Option<u64>) -> Result<Sweep> {
        let s = self.sweep.as_ref().context("the config has no [sweep] section")?;
        Ok(match s.experiment {
            SweepKind::Opinion => {
                let mut e = s.opinion.clone().unwrap_or_default();
                if let Some(seed) = seed {
                    e.base_seed = seed;
                }
                Sweep::Opinion(e)
            }
            SweepKind::Demand => {
                let mut e = s.demand.clone().unwrap_or_default();
                if let Some(seed) = seed {
                    e.base_seed = seed;
                }
                if let Some(p) = &s.sigma0_csv {
                    e.sigma0 = Some(read_sigma0_csv(p)?.iter().copied().collect());
                }
                Sweep::Demand(e)
            }
        })
    }
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "experiment", rename_all = "snake_case")]
pub enum Sweep {
    Opinion(OpinionExperiment),
    Demand(DemandExperiment),
}

//! Opinion dynamics on `n` coupled topics.
//!
//! Agent `i` minimizes `Σⱼ Pᵢⱼ‖xⁱ − xʲ‖² + θᵢ‖xⁱ − x₀ⁱ‖²`, which up to terms
//! not depending on `xⁱ` is the quadratic game with `qᵢ = 1 + θᵢ`, `Q = I`,
//! `C = −I` and `cᵢ = −θᵢx₀ⁱ`.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{CostParams, GameSpec};
use crate::metric::SpdMatrix;
use crate::network::Network;
use crate::sets::{ConvexSet, PrimitiveSet};
use crate::signal::StackedSignal;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    /// Cannot move: `𝒳ⁱ = {x₀ⁱ}`.
    FullyStubborn,
    /// `θᵢ = 0`, opinions anywhere in `[0, 1]ⁿ`.
    Follower,
    /// `θᵢ > 0`, subject to the topic-coupling constraint.
    PartiallyStubborn,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpinionConfig {
    pub theta: Vec<f64>,
    pub x0: Vec<Vec<f64>>,
    pub kinds: Vec<AgentKind>,
    /// Partially stubborn agents keep consecutive topics within
    /// `(x_s − x_{s+1})² ≤ δ`.
    #[serde(default)]
    pub delta: Option<f64>,
}

/// A built opinion game and the (feasible) initial opinions.
#[derive(Clone, Debug)]
pub struct OpinionGame {
    pub game: GameSpec,
    pub x0: StackedSignal,
}

/// Which agents are followers in a randomly generated population.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpinionPopulation {
    /// Every agent partially stubborn.
    StubbornOnly,
    /// `⌊N/2⌋` followers at random positions, the rest partially stubborn.
    HalfFollowers,
}

impl OpinionPopulation {
    pub fn name(&self) -> &'static str {
        match self {
            Self::StubbornOnly => "stubborn_only",
            Self::HalfFollowers => "half_followers",
        }
    }
}

impl OpinionConfig {
    /// Opinions uniform in `[0, 1]ⁿ`, stubbornness `theta` for non-followers.
    pub fn random(
        population: OpinionPopulation,
        n_agents: usize,
        n_topics: usize,
        theta: f64,
        delta: Option<f64>,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x0 = (0..n_agents)
            .map(|_| (0..n_topics).map(|_| rng.random::<f64>()).collect())
            .collect();
        let mut kinds = vec![AgentKind::PartiallyStubborn; n_agents];
        if population == OpinionPopulation::HalfFollowers {
            kinds[..n_agents / 2].fill(AgentKind::Follower);
            kinds.shuffle(&mut rng);
        }
        let theta = kinds
            .iter()
            .map(|k| if *k == AgentKind::Follower { 0.0 } else { theta })
            .collect();
        Self {
            theta,
            x0,
            kinds,
            delta,
        }
    }

    /// Builds the game on `net`. Self-weights are removed first (rows
    /// renormalized), so that `P_ii = 0` for every agent.
    pub fn build(&self, net: &Network) -> Result<OpinionGame> {
        let n_agents = self.kinds.len();
        if self.theta.len() != n_agents || self.x0.len() != n_agents {
            return Err(Error::InvalidGame(format!(
                "{} kinds, {} stubbornness values and {} initial opinions",
                n_agents,
                self.theta.len(),
                self.x0.len()
            )));
        }
        let n = self.x0.first().map_or(0, Vec::len);
        if n == 0 || self.x0.iter().any(|x| x.len() != n) {
            return Err(Error::InvalidGame("initial opinions need a common dimension ≥ 1".into()));
        }
        if let Some(d) = self.delta {
            if !(d >= 0.0) {
                return Err(Error::InvalidGame(format!("coupling threshold δ = {d} < 0")));
            }
        }
        let net = if net.matrix().diagonal().iter().any(|&d| d > 0.0) {
            net.without_self_loops()?
        } else {
            net.clone()
        };

        let mut sets = Vec::with_capacity(n_agents);
        let mut x0 = Vec::with_capacity(n_agents);
        for i in 0..n_agents {
            let theta = self.theta[i];
            let xi = DVector::from_vec(self.x0[i].clone());
            if xi.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::InvalidGame(format!("opinion of agent {i} outside [0, 1]")));
            }
            let set = match self.kinds[i] {
                AgentKind::FullyStubborn if theta >= 0.0 => ConvexSet::singleton(xi.clone())?,
                AgentKind::Follower if theta == 0.0 => ConvexSet::unit_box(n),
                AgentKind::PartiallyStubborn if theta > 0.0 => self.coupled_set(n)?,
                kind => {
                    return Err(Error::InvalidGame(format!(
                        "agent {i}: θ = {theta} is not valid for {kind:?}"
                    )))
                }
            };
            let feasible = set.project(&SpdMatrix::identity(n), &xi, Default::default())?;
            x0.push(feasible);
            sets.push(set);
        }

        let costs = CostParams::new(
            SpdMatrix::identity(n),
            -DMatrix::identity(n, n),
            self.theta.iter().map(|t| 1.0 + t).collect(),
            self.theta.iter().zip(&x0).map(|(t, x)| x * (-t)).collect(),
        )?;
        Ok(OpinionGame {
            game: GameSpec::new(costs, sets, net, 1)?,
            x0: StackedSignal::from_agents(&x0)?,
        })
    }

    fn coupled_set(&self, n: usize) -> Result<ConvexSet> {
        let mut primitives = vec![PrimitiveSet::unit_box(n)];
        if let Some(delta) = self.delta {
            let s = delta.sqrt();
            for t in 0..n.saturating_sub(1) {
                let mut a = DVector::zeros(n);
                a[t] = 1.0;
                a[t + 1] = -1.0;
                primitives.push(PrimitiveSet::halfspace(a.clone(), s)?);
                primitives.push(PrimitiveSet::halfspace(-a, s)?);
            }
        }
        ConvexSet::new(primitives)
    }
}

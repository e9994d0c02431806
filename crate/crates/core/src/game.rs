//! The quadratic network aggregative game
//! `Jⁱ(xⁱ, σⁱ) = qᵢ xⁱᵀQxⁱ + 2(Cσⁱ + cᵢ)ᵀxⁱ`, its optimal responses and the
//! aggregation mappings built on them.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg;
use crate::metric::SpdMatrix;
use crate::network::Network;
use crate::sets::{ConvexSet, Projector};
use crate::signal::StackedSignal;

/// Below this population the stacked response runs on one thread.
const PARALLEL_POPULATION: usize = 64;

/// Shared `Q`, `C` and per-agent `qᵢ`, `cᵢ`.
#[derive(Clone, Debug)]
pub struct CostParams {
    pub q_matrix: SpdMatrix,
    pub c_matrix: DMatrix<f64>,
    pub q: Vec<f64>,
    pub c: Vec<DVector<f64>>,
}

impl CostParams {
    pub fn new(
        q_matrix: SpdMatrix,
        c_matrix: DMatrix<f64>,
        q: Vec<f64>,
        c: Vec<DVector<f64>>,
    ) -> Result<Self> {
        let n = q_matrix.dim();
        check_dim(n, c_matrix.nrows())?;
        check_dim(n, c_matrix.ncols())?;
        check_dim(q.len(), c.len())?;
        if let Some(v) = q.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidGame(format!("q_i = {v} must be positive")));
        }
        for ci in &c {
            check_dim(n, ci.len())?;
        }
        Ok(Self {
            q_matrix,
            c_matrix,
            q,
            c,
        })
    }
}

/// A population of `N` agents with strategies in `ℝⁿ`, coupled through `P^ν`.
#[derive(Clone, Debug)]
pub struct GameSpec {
    costs: CostParams,
    sets: Vec<ConvexSet>,
    net: Network,
    nu: usize,
    // Q⁻¹C and Q⁻¹cᵢ, so the unconstrained minimizer is −(Q⁻¹C z + Q⁻¹cᵢ)/qᵢ.
    qinv_c: DMatrix<f64>,
    qinv_ci: Vec<DVector<f64>>,
    projectors: Vec<Projector>,
}

impl GameSpec {
    pub fn new(costs: CostParams, sets: Vec<ConvexSet>, net: Network, nu: usize) -> Result<Self> {
        let n = costs.q_matrix.dim();
        let population = costs.q.len();
        if population == 0 {
            return Err(Error::InvalidGame("empty population".into()));
        }
        check_dim(population, sets.len())?;
        check_dim(population, net.size())?;
        let mut projectors = Vec::with_capacity(population);
        for (i, set) in sets.iter().enumerate() {
            check_dim(n, set.dim())?;
            if !set.is_bounded() {
                return Err(Error::InvalidGame(format!("set of agent {i} is not bounded")));
            }
            // Scaling the metric by qᵢ leaves the projection unchanged.
            projectors.push(set.projector(&costs.q_matrix)?);
        }
        let qinv = costs.q_matrix.inverse();
        Ok(Self {
            qinv_c: qinv * &costs.c_matrix,
            qinv_ci: costs.c.iter().map(|c| qinv * c).collect(),
            costs,
            sets,
            net,
            nu,
            projectors,
        })
    }

    pub fn dim(&self) -> usize {
        self.costs.q_matrix.dim()
    }

    pub fn population(&self) -> usize {
        self.costs.q.len()
    }

    pub fn nu(&self) -> usize {
        self.nu
    }

    pub fn costs(&self) -> &CostParams {
        &self.costs
    }

    pub fn sets(&self) -> &[ConvexSet] {
        &self.sets
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    /// The same agents on another network.
    pub fn with_network(&self, net: Network) -> Result<Self> {
        check_dim(self.population(), net.size())?;
        Ok(Self { net, ..self.clone() })
    }

    pub fn with_nu(&self, nu: usize) -> Self {
        Self { nu, ..self.clone() }
    }

    fn check_agent(&self, i: usize) -> Result<()> {
        if i < self.population() {
            Ok(())
        } else {
            Err(Error::AgentOutOfRange {
                index: i,
                population: self.population(),
            })
        }
    }

    /// `Jⁱ(x, σ)`.
    pub fn cost(&self, i: usize, x: &DVector<f64>, sigma: &DVector<f64>) -> Result<f64> {
        self.check_agent(i)?;
        check_dim(self.dim(), x.len())?;
        check_dim(self.dim(), sigma.len())?;
        let linear = &self.costs.c_matrix * sigma + &self.costs.c[i];
        Ok(self.costs.q[i] * self.costs.q_matrix.norm_sq(x) + 2.0 * linear.dot(x))
    }

    /// `Jⁱ` at every agent's strategy, with aggregates `P^ν x`.
    pub fn costs_at(&self, profile: &StackedSignal) -> Result<Vec<f64>> {
        let sigma = profile.mix(&self.net.power(self.nu));
        (0..self.population())
            .map(|i| self.cost(i, &profile.agent(i), &sigma.agent(i)))
            .collect()
    }

    /// `x^{i⋆}(z) = Proj^{qᵢQ}_{𝒳ⁱ}(−(qᵢQ)⁻¹(Cz + cᵢ))`.
    pub fn optimal_response(&self, i: usize, z: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_agent(i)?;
        check_dim(self.dim(), z.len())?;
        let free = (&self.qinv_c * z + &self.qinv_ci[i]) * (-1.0 / self.costs.q[i]);
        self.projectors[i].project(&free)
    }

    pub fn stacked_response(&self, z: &StackedSignal) -> Result<StackedSignal> {
        check_dim(self.population(), z.population())?;
        check_dim(self.dim(), z.dim())?;
        let respond = |i: usize| self.optimal_response(i, &z.agent(i));
        let columns: Vec<DVector<f64>> = if self.population() >= PARALLEL_POPULATION {
            (0..self.population())
                .into_par_iter()
                .map(respond)
                .collect::<Result<_>>()?
        } else {
            (0..self.population()).map(respond).collect::<Result<_>>()?
        };
        StackedSignal::from_agents(&columns)
    }

    /// `𝓐_{ν₁,ν₂}(𝒛) = (P^{ν₂}⊗I) 𝒙⋆((P^{ν₁}⊗I) 𝒛)`.
    pub fn aggregate(&self, z: &StackedSignal, nu1: usize, nu2: usize) -> Result<StackedSignal> {
        self.aggregate_with(z, &self.net.power(nu1), &self.net.power(nu2))
    }

    /// [`aggregate`](Self::aggregate) with the two mixing matrices supplied.
    pub fn aggregate_with(
        &self,
        z: &StackedSignal,
        pre: &DMatrix<f64>,
        post: &DMatrix<f64>,
    ) -> Result<StackedSignal> {
        Ok(self.stacked_response(&z.mix(pre))?.mix(post))
    }

    /// `𝓐(𝒛)`: every agent receives the population mean of the responses.
    pub fn aggregate_full_average(&self, z: &StackedSignal) -> Result<StackedSignal> {
        let mean = self.stacked_response(z)?.mean();
        Ok(StackedSignal::from_matrix(DMatrix::from_fn(
            self.dim(),
            self.population(),
            |r, _| mean[r],
        )))
    }

    /// `Mᵢ = [[qᵢQ, −C], [−Cᵀ, qᵢQ]]` and the convergence-table predicates.
    pub fn condition_matrices(&self) -> ConditionReport {
        let n = self.dim();
        let q = self.costs.q_matrix.matrix();
        let c = &self.costs.c_matrix;
        let per_agent: Vec<ConditionMatrix> = self
            .costs
            .q
            .iter()
            .map(|&qi| {
                let mut m = DMatrix::zeros(2 * n, 2 * n);
                m.view_mut((0, 0), (n, n)).copy_from(&(q * qi));
                m.view_mut((n, n), (n, n)).copy_from(&(q * qi));
                m.view_mut((0, n), (n, n)).copy_from(&(-c));
                m.view_mut((n, 0), (n, n)).copy_from(&(-c.transpose()));
                let min_eig = linalg::min_sym_eigenvalue(&m);
                ConditionMatrix { m, min_eig }
            })
            .collect();
        let min_m = per_agent.iter().map(|m| m.min_eig).fold(f64::INFINITY, f64::min);

        let c_symmetric = linalg::is_symmetric(c, 1e-12 * c.amax().max(1.0));
        let c_eigs = linalg::sym_eigenvalues(c);
        let (c_min, c_max) = (c_eigs[0], c_eigs[n - 1]);
        // −qᵢQ ⪯ C  ⟺  qᵢQ + C ⪰ 0
        let lower = self
            .costs
            .q
            .iter()
            .map(|&qi| linalg::min_sym_eigenvalue(&(q * qi + c)))
            .fold(f64::INFINITY, f64::min);
        let neg_margin = lower.min(-c_max);

        ConditionReport {
            m_positive_definite: Condition::strict(min_m),
            m_positive_semidefinite: Condition::weak(min_m),
            c_negative_bounded: Condition {
                holds: c_symmetric && lower >= -EIG_TOL && -c_max > EIG_TOL,
                margin: neg_margin,
            },
            c_positive_definite: Condition {
                holds: c_symmetric && c_min > EIG_TOL,
                margin: c_min,
            },
            c_symmetric,
            per_agent,
        }
    }

    /// `max_k ‖𝓐_ν(𝒛_k) − 𝓐(𝒛_k)‖` over the samples, with the a-priori bound
    /// `‖P^ν − (1/N)𝟙𝟙ᵀ‖₂ · D_N`.
    pub fn uniform_convergence_gap(&self, nu: usize, samples: &[StackedSignal]) -> Result<UniformGap> {
        let pnu = self.net.power(nu);
        let ident = DMatrix::identity(self.population(), self.population());
        let mut gap: f64 = 0.0;
        for z in samples {
            let a_nu = self.aggregate_with(z, &ident, &pnu)?;
            let a = self.aggregate_full_average(z)?;
            gap = gap.max((a_nu.matrix() - a.matrix()).norm());
        }
        let avg = DMatrix::from_element(self.population(), self.population(), 1.0 / self.population() as f64);
        Ok(UniformGap {
            gap,
            bound: linalg::spectral_norm(&(pnu - avg)) * self.stacked_diameter(),
        })
    }

    /// `D_N`: the largest stacked Euclidean norm over the product of the
    /// agents' bounding boxes.
    pub fn stacked_diameter(&self) -> f64 {
        self.sets
            .iter()
            .map(|s| {
                let (lo, hi) = s.bounding_box().expect("game sets are bounded");
                lo.iter()
                    .zip(hi.iter())
                    .map(|(l, h)| (l * l).max(h * h))
                    .sum::<f64>()
            })
            .sum::<f64>()
            .sqrt()
    }
}

const EIG_TOL: f64 = 1e-12;

/// `Mᵢ` and its smallest eigenvalue.
#[derive(Clone, Debug)]
pub struct ConditionMatrix {
    pub m: DMatrix<f64>,
    pub min_eig: f64,
}

/// A predicate with the eigenvalue margin that decides it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub holds: bool,
    pub margin: f64,
}

impl Condition {
    fn strict(margin: f64) -> Self {
        Self {
            holds: margin > EIG_TOL,
            margin,
        }
    }

    fn weak(margin: f64) -> Self {
        Self {
            holds: margin >= -EIG_TOL,
            margin,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ConditionReport {
    pub per_agent: Vec<ConditionMatrix>,
    /// `Mᵢ ≻ 0` for all `i`.
    pub m_positive_definite: Condition,
    /// `Mᵢ ⪰ 0` for all `i`.
    pub m_positive_semidefinite: Condition,
    /// `−qᵢQ ⪯ C ≺ 0` for all `i` (requires symmetric `C`).
    pub c_negative_bounded: Condition,
    /// `C ≻ 0` (requires symmetric `C`).
    pub c_positive_definite: Condition,
    pub c_symmetric: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UniformGap {
    pub gap: f64,
    pub bound: f64,
}

/// Serialized game: cost data and sets. Per-agent lists of length one are
/// shared by the whole population.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameDescription {
    /// `Q`, as rows.
    pub q_matrix: Vec<Vec<f64>>,
    /// `C`, as rows.
    pub c_matrix: Vec<Vec<f64>>,
    pub q: Vec<f64>,
    pub c: Vec<Vec<f64>>,
    pub sets: Vec<ConvexSet>,
}

impl GameDescription {
    pub fn build(&self, net: Network, nu: usize) -> Result<GameSpec> {
        let population = net.size();
        let expand = |len: usize, what: &str| -> Result<()> {
            if len == 1 || len == population {
                Ok(())
            } else {
                Err(Error::InvalidGame(format!(
                    "{what} has {len} entries for a population of {population}"
                )))
            }
        };
        expand(self.q.len(), "q")?;
        expand(self.c.len(), "c")?;
        expand(self.sets.len(), "sets")?;
        let pick = |len: usize, i: usize| if len == 1 { 0 } else { i };
        let costs = CostParams::new(
            SpdMatrix::from_rows(&self.q_matrix)?,
            linalg::matrix_from_rows(&self.c_matrix)?,
            (0..population).map(|i| self.q[pick(self.q.len(), i)]).collect(),
            (0..population)
                .map(|i| DVector::from_vec(self.c[pick(self.c.len(), i)].clone()))
                .collect(),
        )?;
        let sets = (0..population)
            .map(|i| self.sets[pick(self.sets.len(), i)].clone())
            .collect();
        GameSpec::new(costs, sets, net, nu)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Topology;
    use crate::sets::PrimitiveSet;
    use nalgebra::dvector;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// q = 1, Q = 1, C = 0.5, c = −0.5, 𝒳 = [0, 1], two agents on the swap network.
    fn two_agent() -> GameSpec {
        let costs = CostParams::new(
            SpdMatrix::identity(1),
            DMatrix::from_element(1, 1, 0.5),
            vec![1.0; 2],
            vec![dvector![-0.5]; 2],
        )
        .unwrap();
        let swap = Network::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        GameSpec::new(costs, vec![ConvexSet::unit_box(1); 2], swap, 1).unwrap()
    }

    fn random_game(seed: u64, n: usize, population: usize) -> GameSpec {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let l = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let q = SpdMatrix::new(&l * l.transpose() + DMatrix::identity(n, n)).unwrap();
        let c = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let costs = CostParams::new(
            q,
            c,
            (0..population).map(|_| rng.random_range(0.5..2.0)).collect(),
            (0..population)
                .map(|_| DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0)))
                .collect(),
        )
        .unwrap();
        let sets = (0..population)
            .map(|_| {
                let lo = DVector::from_fn(n, |_, _| rng.random_range(-1.0..0.0));
                let hi = &lo + DVector::from_fn(n, |_, _| rng.random_range(0.1..1.5));
                ConvexSet::new(vec![
                    PrimitiveSet::boxed(lo, hi).unwrap(),
                    PrimitiveSet::halfspace(DVector::from_element(n, 1.0), 0.5).unwrap(),
                ])
                .unwrap()
            })
            .collect();
        let net = Topology::SmallWorld { p_shortcut: 0.3 }
            .generate(population, seed)
            .unwrap();
        GameSpec::new(costs, sets, net, 1).unwrap()
    }

    #[test]
    fn cost_examples() {
        let g = two_agent();
        let v = g.cost(0, &dvector![1.0 / 3.0], &dvector![1.0 / 3.0]).unwrap();
        assert!((v + 1.0 / 9.0).abs() < 1e-15);
        assert_eq!(g.cost(1, &dvector![0.0], &dvector![0.7]).unwrap(), 0.0);
        assert!(matches!(
            g.cost(2, &dvector![0.0], &dvector![0.0]),
            Err(Error::AgentOutOfRange { index: 2, population: 2 })
        ));
    }

    #[test]
    fn optimal_response_examples() {
        let g = two_agent();
        let x = g.optimal_response(0, &dvector![1.0 / 3.0]).unwrap();
        assert!((x[0] - 1.0 / 3.0).abs() < 1e-15);
        // (1 − z)/2 clipped to [0, 1]
        assert_eq!(g.optimal_response(0, &dvector![-5.0]).unwrap()[0], 1.0);
        assert_eq!(g.optimal_response(0, &dvector![3.0]).unwrap()[0], 0.0);
    }

    #[test]
    fn stubborn_agent_never_moves() {
        let costs = CostParams::new(
            SpdMatrix::identity(2),
            -DMatrix::identity(2, 2),
            vec![2.0],
            vec![dvector![-0.3, -0.1]],
        )
        .unwrap();
        let x0 = dvector![0.3, 0.1];
        let g = GameSpec::new(
            costs,
            vec![ConvexSet::singleton(x0.clone()).unwrap()],
            Network::averaging(1),
            1,
        )
        .unwrap();
        for z in [dvector![0.0, 0.0], dvector![1.0, -4.0]] {
            assert_eq!(g.optimal_response(0, &z).unwrap(), x0);
        }
    }

    #[test]
    fn aggregate_examples() {
        let g = two_agent();
        let z = StackedSignal::from_agents(&[dvector![0.2], dvector![0.9]]).unwrap();
        assert_eq!(g.aggregate(&z, 0, 0).unwrap(), g.stacked_response(&z).unwrap());
        let fixed = StackedSignal::from_agents(&[dvector![1.0 / 3.0], dvector![1.0 / 3.0]]).unwrap();
        assert!(g.aggregate(&fixed, 0, 1).unwrap().max_abs_diff(&fixed) < 1e-15);

        let avg = g.with_network(Network::averaging(2)).unwrap();
        let a = avg.aggregate(&z, 0, 1).unwrap();
        let full = g.aggregate_full_average(&z).unwrap();
        assert!(a.max_abs_diff(&full) < 1e-15);
        let xs = g.stacked_response(&z).unwrap();
        assert!((a.agent(0)[0] - (xs.agent(0)[0] + xs.agent(1)[0]) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn condition_matrix_of_zero_coupling() {
        let mut g = random_game(1, 2, 4);
        g.costs.c_matrix = DMatrix::zeros(2, 2);
        let r = g.condition_matrices();
        assert!(r.m_positive_definite.holds);
        assert!(!r.c_negative_bounded.holds && !r.c_positive_definite.holds);
    }

    #[test]
    fn uniform_gap_vanishes_on_average_and_decreases() {
        let g = random_game(4, 2, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let samples: Vec<StackedSignal> = (0..100)
            .map(|_| StackedSignal::from_matrix(DMatrix::from_fn(2, 10, |_, _| rng.random_range(-1.0..1.0))))
            .collect();
        let avg = g.with_network(Network::averaging(10)).unwrap();
        assert!(avg.uniform_convergence_gap(3, &samples).unwrap().gap < 1e-12);
        let gaps: Vec<UniformGap> = [1, 5, 20]
            .iter()
            .map(|&nu| g.uniform_convergence_gap(nu, &samples).unwrap())
            .collect();
        for w in gaps.windows(2) {
            assert!(w[1].gap <= w[0].gap + 1e-12);
        }
        for u in &gaps {
            assert!(u.gap <= u.bound + 1e-12);
        }
    }

    #[test]
    fn description_broadcasts_single_entries() {
        let toml_like = serde_json::json!({
            "q_matrix": [[1.0]],
            "c_matrix": [[0.5]],
            "q": [1.0],
            "c": [[-0.5]],
            "sets": [[{"kind": "box", "lo": [0.0], "hi": [1.0]}]]
        });
        let d: GameDescription = serde_json::from_value(toml_like).unwrap();
        let swap = Network::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let g = d.build(swap, 1).unwrap();
        assert_eq!(g.population(), 2);
        assert!((g.optimal_response(1, &dvector![1.0 / 3.0]).unwrap()[0] - 1.0 / 3.0).abs() < 1e-15);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn response_is_feasible_optimal_and_lipschitz(seed in any::<u64>()) {
            let g = random_game(seed, 2, 3);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
            let c = &g.costs().c_matrix;
            let smax = linalg::spectral_norm(c);
            for i in 0..3 {
                let z = DVector::from_fn(2, |_, _| rng.random_range(-2.0..2.0));
                let w = DVector::from_fn(2, |_, _| rng.random_range(-2.0..2.0));
                let x = g.optimal_response(i, &z).unwrap();
                prop_assert!(g.sets()[i].contains(&x, 1e-9).unwrap());
                let best = g.cost(i, &x, &z).unwrap();
                for _ in 0..20 {
                    let y = g.sets()[i]
                        .project(
                            &SpdMatrix::identity(2),
                            &DVector::from_fn(2, |_, _| rng.random_range(-2.0..2.0)),
                            Default::default(),
                        )
                        .unwrap();
                    prop_assert!(best <= g.cost(i, &y, &z).unwrap() + 1e-8);
                }
                // Nonexpansive in ‖·‖_Q after the affine pre-map; translated to
                // Euclidean norms via the extreme eigenvalues of Q.
                let q = &g.costs().q_matrix;
                let xw = g.optimal_response(i, &w).unwrap();
                let kappa = (q.max_eigenvalue() / q.min_eigenvalue()).sqrt();
                let lip = kappa * smax / (g.costs().q[i] * q.min_eigenvalue());
                prop_assert!((&x - &xw).norm() <= lip * (&z - &w).norm() + 1e-8);
            }
        }

        #[test]
        fn split_zero_nu_is_the_plain_mapping(seed in any::<u64>()) {
            let g = random_game(seed, 2, 5).with_nu(3);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let z = StackedSignal::from_matrix(DMatrix::from_fn(2, 5, |_, _| rng.random_range(-1.0..1.0)));
            let direct = g.stacked_response(&z).unwrap().mix(&g.network().power(3));
            prop_assert!(g.aggregate(&z, 0, 3).unwrap().max_abs_diff(&direct) <= 1e-12);
        }
    }
}

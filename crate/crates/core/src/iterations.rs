//! Fixed-point iterations `𝒛_{k+1} = Φ_k(𝒛_k, 𝓐_{ν₁,ν₂}(𝒛_k))` and the
//! conditions under which they converge.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::game::{Condition, GameSpec};
use crate::linalg;
use crate::signal::StackedSignal;

/// Step sizes `α_k` of the Mann iteration, `k = 1, 2, …`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MannSchedule {
    /// `α_k = 1/(k − 1 + start)`; `start = 2` gives `1/2, 1/3, …`.
    Harmonic { start: usize },
    /// `α_k = (k − 1 + start)^(−power)` with `power ∈ (0, 1]`.
    Polynomial { start: usize, power: f64 },
}

impl Default for MannSchedule {
    fn default() -> Self {
        Self::Harmonic { start: 2 }
    }
}

impl MannSchedule {
    pub fn alpha(&self, k: usize) -> f64 {
        match *self {
            Self::Harmonic { start } => 1.0 / (k - 1 + start) as f64,
            Self::Polynomial { start, power } => ((k - 1 + start) as f64).powf(-power),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Self::Harmonic { start } => start >= 1,
            Self::Polynomial { start, power } => start >= 1 && power > 0.0 && power <= 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Precondition(format!(
                "Mann schedule {self:?} violates α_k ∈ (0, 1], α_k → 0, Σα_k = ∞"
            )))
        }
    }
}

/// The feedback mapping `Φ_k`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeedbackScheme {
    /// `z⁺ = 𝓐(z)`
    PicardBanach,
    /// `z⁺ = (1 − λ)z + λ𝓐(z)`
    Krasnoselskij {
        #[serde(default = "default_lambda")]
        lambda: f64,
    },
    /// `z⁺ = (1 − α_k)z + α_k𝓐(z)`
    Mann {
        #[serde(default)]
        schedule: MannSchedule,
    },
}

fn default_lambda() -> f64 {
    0.5
}

impl FeedbackScheme {
    pub fn krasnoselskij() -> Self {
        Self::Krasnoselskij {
            lambda: default_lambda(),
        }
    }

    pub fn mann() -> Self {
        Self::Mann {
            schedule: MannSchedule::default(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::PicardBanach => "picard_banach",
            Self::Krasnoselskij { .. } => "krasnoselskij",
            Self::Mann { .. } => "mann",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::PicardBanach => Ok(()),
            Self::Krasnoselskij { lambda } if *lambda > 0.0 && *lambda < 1.0 => Ok(()),
            Self::Krasnoselskij { lambda } => Err(Error::Precondition(format!(
                "Krasnoselskij λ = {lambda} must lie in (0, 1)"
            ))),
            Self::Mann { schedule } => schedule.validate(),
        }
    }

    /// Weight given to `𝓐(z)` at iteration `k`.
    fn weight(&self, k: usize) -> f64 {
        match self {
            Self::PicardBanach => 1.0,
            Self::Krasnoselskij { lambda } => *lambda,
            Self::Mann { schedule } => schedule.alpha(k),
        }
    }
}

/// Communication rounds before (`nu1`) and after (`nu2`) the optimization step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub nu1: usize,
    pub nu2: usize,
}

impl SplitCounts {
    /// `(0, ν)`: the memoryless update.
    pub fn memoryless(nu: usize) -> Self {
        Self { nu1: 0, nu2: nu }
    }

    /// `(ν/2, ν/2)`; `ν` must be even.
    pub fn symmetric(nu: usize) -> Result<Self> {
        if !nu.is_multiple_of(2) {
            return Err(Error::Precondition(format!(
                "the symmetric split needs an even ν, got {nu}"
            )));
        }
        Ok(Self {
            nu1: nu / 2,
            nu2: nu / 2,
        })
    }

    pub fn total(&self) -> usize {
        self.nu1 + self.nu2
    }

    pub fn is_memoryless(&self) -> bool {
        self.nu1 == 0
    }

    pub fn is_symmetric(&self) -> bool {
        self.nu1 == self.nu2
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualKind {
    /// `‖𝒛_{k+1} − 𝒛_k‖_∞`
    SignalDelta,
    /// `‖𝓐_ν(𝒂_k) − 𝒂_k‖_∞` with `𝒂_k = (P^{ν₁}⊗I)𝒛_k`, the signal the agents
    /// optimize against.
    FixedPointGap,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoppingRule {
    pub tol: f64,
    pub kind: ResidualKind,
    pub max_iter: usize,
}

impl StoppingRule {
    /// `‖𝒛_{k+1} − 𝒛_k‖_∞ ≤ 1e-5`, at most 10⁴ iterations.
    pub fn signal_delta(tol: f64) -> Self {
        Self {
            tol,
            kind: ResidualKind::SignalDelta,
            max_iter: 10_000,
        }
    }

    /// Fixed-point gap `≤ tol`, at most 10⁴ iterations.
    pub fn fixed_point_gap(tol: f64) -> Self {
        Self {
            tol,
            kind: ResidualKind::FixedPointGap,
            max_iter: 10_000,
        }
    }

    pub fn with_max_iter(self, max_iter: usize) -> Self {
        Self { max_iter, ..self }
    }
}

impl Default for StoppingRule {
    fn default() -> Self {
        Self::signal_delta(1e-5)
    }
}

#[derive(Clone, Debug)]
pub struct RunResult {
    /// Number of signal updates performed.
    pub iterations: usize,
    pub converged: bool,
    pub final_z: StackedSignal,
    /// `𝒙⋆((P^{ν₁}⊗I) final_z)`: what the agents play.
    pub final_strategies: StackedSignal,
    pub residual_history: Vec<f64>,
    pub trajectory: Option<Vec<StackedSignal>>,
    /// Period of the signal sequence when the run ended in a cycle.
    pub period: Option<usize>,
}

const PERIOD_WINDOW: usize = 16;

/// Mixing matrices `P^{ν₁}`, `P^{ν₂}` and `P^ν` for one game and split.
struct Mixers {
    pre: DMatrix<f64>,
    post: DMatrix<f64>,
}

impl Mixers {
    fn new(game: &GameSpec, split: SplitCounts) -> Self {
        Self {
            pre: game.network().power(split.nu1),
            post: game.network().power(split.nu2),
        }
    }
}

fn check_inputs(game: &GameSpec, split: SplitCounts, z: &StackedSignal) -> Result<()> {
    if split.total() != game.nu() {
        return Err(Error::Precondition(format!(
            "split ({}, {}) does not add up to ν = {}",
            split.nu1,
            split.nu2,
            game.nu()
        )));
    }
    check_dim(game.population(), z.population())?;
    check_dim(game.dim(), z.dim())
}

/// One update `Φ_k(𝒛_k, 𝓐_{ν₁,ν₂}(𝒛_k))`; `k ≥ 1`.
pub fn step(
    game: &GameSpec,
    scheme: &FeedbackScheme,
    split: SplitCounts,
    z: &StackedSignal,
    k: usize,
) -> Result<StackedSignal> {
    scheme.validate()?;
    check_inputs(game, split, z)?;
    let mix = Mixers::new(game, split);
    let a = game.aggregate_with(z, &mix.pre, &mix.post)?;
    Ok(z.blend(&a, scheme.weight(k.max(1))))
}

/// Iterates [`step`] until the stopping rule fires or `max_iter` is reached.
/// Not converging is a result, not an error.
pub fn run(
    game: &GameSpec,
    scheme: &FeedbackScheme,
    split: SplitCounts,
    stop: &StoppingRule,
    z0: &StackedSignal,
    record_trajectory: bool,
) -> Result<RunResult> {
    scheme.validate()?;
    check_inputs(game, split, z0)?;
    if !(stop.tol > 0.0) {
        return Err(Error::Precondition("stopping tolerance must be positive".into()));
    }
    let mix = Mixers::new(game, split);
    let mut z = z0.clone();
    let mut residuals = Vec::new();
    let mut trajectory = record_trajectory.then(|| vec![z.clone()]);
    let mut recent: VecDeque<StackedSignal> = VecDeque::from([z.clone()]);
    let mut converged = false;
    let mut iterations = 0;

    for k in 1..=stop.max_iter {
        let seen = z.mix(&mix.pre);
        let aggregate = game.stacked_response(&seen)?.mix(&mix.post);
        if stop.kind == ResidualKind::FixedPointGap {
            let gap = aggregate.mix(&mix.pre).max_abs_diff(&seen);
            residuals.push(gap);
            if gap <= stop.tol {
                converged = true;
                break;
            }
        }
        let next = z.blend(&aggregate, scheme.weight(k));
        iterations = k;
        let delta = next.max_abs_diff(&z);
        z = next;
        if let Some(t) = trajectory.as_mut() {
            t.push(z.clone());
        }
        recent.push_back(z.clone());
        if recent.len() > PERIOD_WINDOW {
            recent.pop_front();
        }
        if stop.kind == ResidualKind::SignalDelta {
            residuals.push(delta);
            if delta <= stop.tol {
                converged = true;
                break;
            }
        }
    }

    let period = if converged {
        None
    } else {
        detect_period(recent.make_contiguous(), stop.tol, PERIOD_WINDOW / 2)
    };
    let final_strategies = game.stacked_response(&z.mix(&mix.pre))?;
    Ok(RunResult {
        iterations,
        converged,
        final_z: z,
        final_strategies,
        residual_history: residuals,
        trajectory,
        period,
    })
}

/// Smallest `p ≥ 2` such that the last `p` iterates repeat the `p` before
/// them within `tol`.
pub fn detect_period(history: &[StackedSignal], tol: f64, max_period: usize) -> Option<usize> {
    let len = history.len();
    (2..=max_period)
        .filter(|&p| 2 * p <= len)
        .find(|&p| (len - p..len).all(|t| history[t].max_abs_diff(&history[t - p]) <= tol))
}

/// One row of the convergence table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TableRow {
    pub row: u8,
    pub feedback: &'static str,
    pub split: &'static str,
    pub cost_condition: &'static str,
    pub cost: Condition,
    pub network_condition: &'static str,
    pub network: Condition,
    /// Both conditions hold.
    pub applies: bool,
}

/// Evaluates the four rows of the convergence table on `game`.
///
/// The network condition `‖P‖ ≤ 1` of rows 1–2 is also accepted when `P` is
/// nonexpansive in the norm weighted by its stationary distribution, which
/// keeps the same argument valid in `ℋ_{Π⊗Q}`.
pub fn convergence_table(game: &GameSpec) -> Vec<TableRow> {
    let cond = game.condition_matrices();
    let report = game.network().certify();
    let weighted = report.stationary_norm.unwrap_or(f64::INFINITY);
    let norm = report.operator_norm.min(weighted);
    let nonexpansive = Condition {
        holds: norm <= 1.0 + 1e-10,
        margin: 1.0 - norm,
    };
    let even = game.nu().is_multiple_of(2);
    let symmetric = Condition {
        holds: report.symmetric && even,
        margin: if report.symmetric && even { 0.0 } else { -1.0 },
    };
    let row = |row, feedback, split, cost_condition, cost: Condition, network_condition, network: Condition| TableRow {
        row,
        feedback,
        split,
        cost_condition,
        cost,
        network_condition,
        network,
        applies: cost.holds && network.holds,
    };
    vec![
        row(1, "picard_banach", "(0, ν)", "M_i ≻ 0", cond.m_positive_definite, "‖P‖ ≤ 1", nonexpansive),
        row(2, "krasnoselskij", "(0, ν)", "M_i ⪰ 0", cond.m_positive_semidefinite, "‖P‖ ≤ 1", nonexpansive),
        row(3, "picard_banach", "(ν/2, ν/2)", "−q_i Q ⪯ C ≺ 0", cond.c_negative_bounded, "P = Pᵀ, ν even", symmetric),
        row(4, "mann", "(ν/2, ν/2)", "C ≻ 0", cond.c_positive_definite, "P = Pᵀ, ν even", symmetric),
    ]
}

/// Rows of the table that guarantee convergence of `scheme` with `split`.
///
/// A row proven for a scheme also covers the more damped ones: a contraction
/// or firmly nonexpansive map converges under Krasnoselskij and Mann too, and
/// a nonexpansive one under Mann.
pub fn admissible_rows(game: &GameSpec, scheme: &FeedbackScheme, split: SplitCounts) -> Vec<u8> {
    let covers = |row: u8| -> bool {
        let memoryless = split.is_memoryless();
        let symmetric = split.is_symmetric() && split.total().is_multiple_of(2);
        match (row, scheme) {
            (1, _) => memoryless,
            (2, FeedbackScheme::PicardBanach) => false,
            (2, _) => memoryless,
            (3, _) => symmetric,
            (4, FeedbackScheme::Mann { .. }) => symmetric,
            _ => false,
        }
    };
    convergence_table(game)
        .into_iter()
        .filter(|r| r.applies && covers(r.row))
        .map(|r| r.row)
        .collect()
}

/// Which regularity statement to test, matching the table rows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegularityCase {
    /// `𝓐_{0,ν}` is a contraction in `ℋ_{I⊗Q}`.
    Contraction,
    /// `𝓐_{0,ν}` is nonexpansive in `ℋ_{I⊗Q}`.
    Nonexpansive,
    /// `𝓐_{ν/2,ν/2}` is firmly nonexpansive in `ℋ_{I⊗(−C)}`.
    FirmlyNonexpansive,
    /// `𝓐_{ν/2,ν/2}` is strictly pseudo-contractive in `ℋ_{I⊗C}`.
    StrictlyPseudoContractive,
}

impl RegularityCase {
    pub fn from_row(row: u8) -> Option<Self> {
        match row {
            1 => Some(Self::Contraction),
            2 => Some(Self::Nonexpansive),
            3 => Some(Self::FirmlyNonexpansive),
            4 => Some(Self::StrictlyPseudoContractive),
            _ => None,
        }
    }
}

/// Worst sampled values of the defining inequalities, each normalized by
/// `‖r − s‖²_S`. A margin is `rhs − lhs` of the inequality, so nonnegative
/// margins mean the property held on every sample.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegularityReport {
    pub case: RegularityCase,
    pub metric: String,
    pub samples: usize,
    /// `max ‖𝓐r − 𝓐s‖_S / ‖r − s‖_S`.
    pub contraction_factor: f64,
    /// `min (‖Δ‖² − ‖Δ𝓐‖²)`.
    pub ne_margin: f64,
    /// `min (⟨Δ, Δ𝓐⟩ − ‖Δ𝓐‖²)`.
    pub fne_margin: f64,
    /// `min ⟨−Δ𝓐, Δ⟩`, monotonicity of `−𝓐`.
    pub mon_margin: f64,
    /// Smallest `ρ` with `‖Δ𝓐‖² ≤ ‖Δ‖² + ρ‖Δ𝓐 − Δ‖²` on all samples.
    pub spc_rho: f64,
    /// The case's own property held on every sample.
    pub holds: bool,
}

const MARGIN_TOL: f64 = 1e-9;

/// Samples pairs `(r, s)` uniformly in the box containing every agent's set
/// and evaluates the regularity inequalities of `case`.
pub fn certify_regularity(
    game: &GameSpec,
    case: RegularityCase,
    n_samples: usize,
    seed: u64,
) -> Result<RegularityReport> {
    if n_samples == 0 {
        return Err(Error::Precondition("need at least one sample".into()));
    }
    let n = game.dim();
    let population = game.population();
    let c = &game.costs().c_matrix;
    let (split, s_block, mut metric) = match case {
        RegularityCase::Contraction | RegularityCase::Nonexpansive => (
            SplitCounts::memoryless(game.nu()),
            game.costs().q_matrix.matrix().clone(),
            "I⊗Q".to_string(),
        ),
        RegularityCase::FirmlyNonexpansive => (
            SplitCounts::symmetric(game.nu())?,
            -linalg::sym(c),
            "I⊗(−C)".to_string(),
        ),
        RegularityCase::StrictlyPseudoContractive => (
            SplitCounts::symmetric(game.nu())?,
            linalg::sym(c),
            "I⊗C".to_string(),
        ),
    };
    if linalg::min_sym_eigenvalue(&s_block) <= 0.0 {
        return Err(Error::NotPositiveDefinite(format!(
            "metric {metric} for case {case:?}"
        )));
    }
    // Agent weights: uniform, or the stationary distribution when P is only
    // nonexpansive in that weighted norm.
    let mut weights = DVector::from_element(population, 1.0);
    if matches!(case, RegularityCase::Contraction | RegularityCase::Nonexpansive) {
        let report = game.network().certify();
        if report.operator_norm > 1.0 + 1e-10 {
            if let Some(pi) = game.network().stationary_distribution() {
                weights = pi * population as f64;
                metric = "Π⊗Q".to_string();
            }
        }
    }
    let inner = |u: &StackedSignal, v: &StackedSignal| -> f64 {
        let su = &s_block * u.matrix();
        (0..population)
            .map(|i| weights[i] * su.column(i).dot(&v.matrix().column(i)))
            .sum()
    };

    let (lo, hi) = union_box(game);
    let mix = Mixers::new(game, split);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || {
        StackedSignal::from_matrix(DMatrix::from_fn(n, population, |r, _| {
            if lo[r] < hi[r] {
                rng.random_range(lo[r]..hi[r])
            } else {
                lo[r]
            }
        }))
    };

    let mut report = RegularityReport {
        case,
        metric,
        samples: 0,
        contraction_factor: 0.0,
        ne_margin: f64::INFINITY,
        fne_margin: f64::INFINITY,
        mon_margin: f64::INFINITY,
        spc_rho: f64::NEG_INFINITY,
        holds: false,
    };
    for _ in 0..n_samples {
        let (r, s) = (draw(), draw());
        let d = StackedSignal::from_matrix(r.matrix() - s.matrix());
        let dd = inner(&d, &d);
        if dd <= 1e-300 {
            continue;
        }
        let ar = game.aggregate_with(&r, &mix.pre, &mix.post)?;
        let as_ = game.aggregate_with(&s, &mix.pre, &mix.post)?;
        let da = StackedSignal::from_matrix(ar.matrix() - as_.matrix());
        let aa = inner(&da, &da);
        let cross = inner(&d, &da);
        let resid = StackedSignal::from_matrix(da.matrix() - d.matrix());
        let rr = inner(&resid, &resid);
        report.samples += 1;
        report.contraction_factor = report.contraction_factor.max((aa / dd).max(0.0).sqrt());
        report.ne_margin = report.ne_margin.min((dd - aa) / dd);
        report.fne_margin = report.fne_margin.min((cross - aa) / dd);
        report.mon_margin = report.mon_margin.min(-cross / dd);
        if rr > 1e-300 {
            report.spc_rho = report.spc_rho.max((aa - dd) / rr);
        }
    }
    report.holds = match case {
        RegularityCase::Contraction => report.contraction_factor < 1.0,
        RegularityCase::Nonexpansive => report.ne_margin >= -MARGIN_TOL,
        RegularityCase::FirmlyNonexpansive => report.fne_margin >= -MARGIN_TOL,
        RegularityCase::StrictlyPseudoContractive => {
            report.mon_margin >= -MARGIN_TOL && report.spc_rho < 1.0
        }
    };
    Ok(report)
}

/// Coordinate-wise hull of all agents' bounding boxes.
fn union_box(game: &GameSpec) -> (DVector<f64>, DVector<f64>) {
    let n = game.dim();
    let mut lo = DVector::from_element(n, f64::INFINITY);
    let mut hi = DVector::from_element(n, f64::NEG_INFINITY);
    for set in game.sets() {
        let (l, h) = set.bounding_box().expect("game sets are bounded");
        lo = lo.inf(l);
        hi = hi.sup(h);
    }
    (lo, hi)
}

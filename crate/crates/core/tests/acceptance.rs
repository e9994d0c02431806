mod common;

use std::time::Instant;

use nagame::applications::experiments::{
    run_demand_experiment, run_opinion_experiment, summarize_demand, summarize_opinion,
    DemandExperiment, OpinionExperiment,
};
use nagame::applications::{AgentKind, OpinionConfig};
use nagame::equilibrium::{brute_force_nash, certify_nash};
use nagame::iterations::{self, certify_regularity, RegularityCase};
use nagame::linalg;
use nagame::{
    ConvexSet, CostParams, DeviationMode, FeedbackScheme, GameSpec, Network, PrimitiveSet,
    ProjectionOptions, SpdMatrix, SplitCounts, StackedSignal, StoppingRule, Topology,
};
use nagame::applications::DemandResponseConfig;
use nagame::applications::demand::synthetic_sigma0;
use nalgebra::{dvector, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("two-agent swap game", two_agent_swap),
        ("opinion iteration counts", opinion_counts),
        ("follower cycle on a directed ring", follower_cycle),
        ("fixed points are network equilibria", fixed_points_are_equilibria),
        ("consensus error bound", consensus_bound),
        ("demand response epsilon trend", demand_trend),
        ("distributed nu-bar", distributed_nu_bar),
        ("regularity certification", regularity),
        ("hierarchical networks", hierarchical),
        ("projection against a grid", projection_grid),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let o = check();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!(
            "{tag} {:>2} {name}: {} ({:.1}s)",
            k + 1,
            o.detail,
            t.elapsed().as_secs_f64()
        );
        failed += usize::from(!o.pass);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

fn swap_game() -> GameSpec {
    let unit = || ConvexSet::from_primitive(PrimitiveSet::boxed(dvector![0.0], dvector![1.0]).unwrap()).unwrap();
    let costs = CostParams::new(
        SpdMatrix::identity(1),
        DMatrix::from_element(1, 1, 0.5),
        vec![1.0, 1.0],
        vec![dvector![-0.5], dvector![-0.5]],
    )
    .unwrap();
    let swap = Network::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
    GameSpec::new(costs, vec![unit(), unit()], swap, 1).unwrap()
}

fn two_agent_swap() -> Outcome {
    // x = (1 − x)/2 has the unique solution 1/3.
    let target = 1.0 / 3.0;
    let game = swap_game();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let stop = StoppingRule::signal_delta(1e-9).with_max_iter(100);
    let t = Instant::now();
    let mut worst_err: f64 = 0.0;
    let mut worst_iters = 0;
    let mut worst_eps: f64 = 0.0;
    let mut all_converged = true;
    for _ in 0..10 {
        let z0 = StackedSignal::from_matrix(DMatrix::from_fn(1, 2, |_, _| rng.random::<f64>()));
        let r = iterations::run(&game, &FeedbackScheme::PicardBanach, SplitCounts::memoryless(1), &stop, &z0, false)
            .unwrap();
        all_converged &= r.converged;
        worst_iters = worst_iters.max(r.iterations);
        worst_err = worst_err.max(r.final_z.matrix().iter().map(|v| (v - target).abs()).fold(0.0, f64::max));
        let cert = certify_nash(&game, &r.final_strategies, DeviationMode::Network { nu: 1 }).unwrap();
        worst_eps = worst_eps.max(cert.max_eps);
    }
    let elapsed = t.elapsed().as_secs_f64();
    let grid = brute_force_nash(&game, 1e-4).unwrap();
    let grid_err = grid.matrix().iter().map(|v| (v - target).abs()).fold(0.0, f64::max);
    outcome(
        all_converged && worst_err <= 1e-6 && worst_iters <= 100 && elapsed < 1.0 && worst_eps <= 1e-6 && grid_err <= 1e-4,
        format!(
            "max |z − 1/3| = {worst_err:.1e}, max iterations {worst_iters}, {elapsed:.3}s for 10 runs, max_eps {worst_eps:.1e}, grid oracle off by {grid_err:.1e}"
        ),
    )
}

fn opinion_counts() -> Outcome {
    let cfg = OpinionExperiment {
        sizes: vec![10, 50, 100],
        seeds: 20,
        ..Default::default()
    };
    let rows = run_opinion_experiment(&cfg).unwrap();
    let converged = rows.iter().filter(|r| r.converged).count();
    let summary = summarize_opinion(&rows);
    let mut worst = (0.0, String::new());
    let mut pass = converged == rows.len();
    for population in ["stubborn_only", "half_followers"] {
        for topology in ["complete", "directed_ring", "small_world"] {
            let means: Vec<f64> = summary
                .iter()
                .filter(|s| s.population == population && s.topology == topology)
                .map(|s| s.mean_iterations)
                .collect();
            let hi = means.iter().copied().fold(f64::MIN, f64::max);
            let lo = means.iter().copied().fold(f64::MAX, f64::min);
            let ratio = hi / lo;
            pass &= ratio < 2.0;
            if ratio > worst.0 {
                worst = (ratio, format!("{population}/{topology}"));
            }
        }
    }
    outcome(
        pass,
        format!(
            "{converged}/{} runs converged, largest mean-iteration ratio across N {:.2} ({})",
            rows.len(),
            worst.0,
            worst.1
        ),
    )
}

fn follower_cycle() -> Outcome {
    let cfg = OpinionConfig {
        theta: vec![0.0; 3],
        x0: vec![vec![0.1], vec![0.5], vec![0.9]],
        kinds: vec![AgentKind::Follower; 3],
        delta: None,
    };
    let net = Topology::DirectedRing.generate(3, 0).unwrap();
    let og = cfg.build(&net).unwrap();
    let z0 = og.x0.mix(net.matrix());
    let stop = StoppingRule::signal_delta(1e-5).with_max_iter(500);
    let split = SplitCounts::memoryless(1);
    let pb = iterations::run(&og.game, &FeedbackScheme::PicardBanach, split, &stop, &z0, false).unwrap();
    let k = iterations::run(&og.game, &FeedbackScheme::krasnoselskij(), split, &stop, &z0, false).unwrap();
    outcome(
        !pb.converged && pb.iterations == 500 && pb.period == Some(3) && k.converged,
        format!(
            "best responses: converged {} after {}, period {:?}; Krasnoselskij: converged {} after {}",
            pb.converged, pb.iterations, pb.period, k.converged, k.iterations
        ),
    )
}

fn fixed_points_are_equilibria() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let tol = 1e-7;
    let stop = StoppingRule::signal_delta(tol).with_max_iter(10_000);
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for _ in 0..50 {
        let game = common::random_row_one_game(&mut rng);
        ok &= game.condition_matrices().m_positive_definite.holds
            && game.network().operator_norm() <= 1.0 + 1e-12
            && game.network().check_no_cycles(1).unwrap();
        let z0 = common::random_signal(&game, &mut rng);
        let r = iterations::run(&game, &FeedbackScheme::PicardBanach, SplitCounts::memoryless(1), &stop, &z0, false)
            .unwrap();
        ok &= r.converged;
        let cert = certify_nash(&game, &r.final_strategies, DeviationMode::Network { nu: 1 }).unwrap();
        worst = worst.max(cert.max_eps);
    }
    outcome(
        ok && worst <= 100.0 * tol,
        format!("50 games, all hypotheses held and runs converged: {ok}, worst max_eps {worst:.1e} (bound {:.0e})", 100.0 * tol),
    )
}

/// Least-squares slope of `log e` against `ν`, ignoring values at rounding level.
fn log_slope(errors: &[(usize, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = errors
        .iter()
        .filter(|(_, e)| *e > 1e-12)
        .map(|&(nu, e)| (nu as f64, e.ln()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

fn consensus_bound() -> Outcome {
    let mut nets = Vec::new();
    for n in [8, 16, 32] {
        nets.push((format!("ring {n}"), Topology::UndirectedRing.generate(n, 0).unwrap()));
        for seed in 0..3 {
            nets.push((
                format!("small world {n}/{seed}"),
                Topology::SmallWorld { p_shortcut: 0.3 }.generate(n, seed).unwrap(),
            ));
        }
    }
    let mut pass = true;
    let mut worst_gap = f64::NEG_INFINITY;
    let mut worst_slope = (f64::NEG_INFINITY, String::new());
    for (name, net) in &nets {
        // μ from the spectrum: largest |λ| after dropping one eigenvalue 1.
        let ev = linalg::sym_eigenvalues(net.matrix());
        let mut moduli: Vec<f64> = ev[..ev.len() - 1].iter().map(|v| v.abs()).collect();
        moduli.sort_by(f64::total_cmp);
        let mu = *moduli.last().unwrap();
        let sqrt_n = (net.size() as f64).sqrt();
        let errors: Vec<(usize, f64)> = (1..=50).map(|nu| (nu, net.consensus_error(nu))).collect();
        for &(nu, e) in &errors {
            let gap = e - sqrt_n * mu.powi(nu as i32);
            worst_gap = worst_gap.max(gap);
            pass &= gap <= 1e-9;
        }
        let slope = log_slope(&errors);
        let excess = slope - mu.ln();
        pass &= excess <= 0.05;
        if excess > worst_slope.0 {
            worst_slope = (excess, name.clone());
        }
    }
    outcome(
        pass,
        format!(
            "{} networks, max(error − √N μ^ν) = {worst_gap:.1e}, largest slope − log μ = {:.3} ({})",
            nets.len(),
            worst_slope.0,
            worst_slope.1
        ),
    )
}

fn demand_trend() -> Outcome {
    let cfg = DemandExperiment::default();
    let rows = run_demand_experiment(&cfg).unwrap();
    let summary = summarize_demand(&rows);
    let eps = |n: usize, nu: Option<usize>| {
        summary
            .iter()
            .find(|s| s.n_agents == n && s.nu == nu)
            .map(|s| s.mean_max_eps)
            .unwrap()
    };
    let converged = rows.iter().all(|r| r.converged);
    let mut pass = converged;
    let mut parts = Vec::new();
    for &n in &cfg.sizes {
        let seq: Vec<f64> = cfg.nus.iter().map(|&nu| eps(n, Some(nu))).collect();
        pass &= seq.windows(2).all(|w| w[1] < w[0]);
        parts.push(format!(
            "N={n}: {}",
            seq.iter().map(|e| format!("{e:.4}")).collect::<Vec<_>>().join(" → ")
        ));
    }
    let last = *cfg.nus.last().unwrap();
    let across_n: Vec<f64> = cfg.sizes.iter().map(|&n| eps(n, Some(last))).collect();
    pass &= across_n.windows(2).all(|w| w[1] < w[0]);
    outcome(
        pass,
        format!(
            "mean MF max_eps over ν {:?}: {}; all runs converged: {converged}",
            cfg.nus,
            parts.join("; ")
        ),
    )
}

fn distributed_nu_bar() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut mismatches = 0;
    let mut checked = 0;
    for _ in 0..20 {
        let n = rng.random_range(3..=20);
        let net = common::primitive_doubly_stochastic(n, &mut rng);
        assert!(net.is_primitive() && net.is_doubly_stochastic());
        for eps in [1e-1, 1e-2, 1e-3] {
            let central = (1..).find(|&nu| net.consensus_error(nu) <= eps).unwrap();
            let distributed = net.precompute_nu_bar(eps, 100_000).unwrap();
            checked += 1;
            mismatches += usize::from(central != distributed);
        }
    }
    let swap = Network::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
    let swap_fails = matches!(
        swap.precompute_nu_bar(1e-3, 1000),
        Err(nagame::Error::NoConvergence { .. })
    );
    outcome(
        mismatches == 0 && swap_fails,
        format!("{mismatches} mismatches in {checked} comparisons; swap matrix reports no convergence: {swap_fails}"),
    )
}

fn regularity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut lines = Vec::new();
    let mut pass = true;

    // Row 1: Mᵢ ≻ 0, ‖P‖ ≤ 1.
    let g1 = common::random_row_one_game(&mut rng);
    let r1 = certify_regularity(&g1, RegularityCase::Contraction, 1000, 1).unwrap();
    pass &= iterations::admissible_rows(&g1, &FeedbackScheme::PicardBanach, SplitCounts::memoryless(1)).contains(&1);
    pass &= r1.holds && r1.contraction_factor < 1.0 && r1.ne_margin >= -1e-9;
    lines.push(format!("row 1 factor {:.3}", r1.contraction_factor));

    // Row 2: Mᵢ ⪰ 0 (q = 1, Q = I, C = −I), ‖P‖ ≤ 1.
    let n_agents = 6;
    let ring = Topology::CompleteNoSelf.generate(n_agents, 0).unwrap();
    let costs = CostParams::new(
        SpdMatrix::identity(2),
        -DMatrix::identity(2, 2),
        vec![1.0; n_agents],
        (0..n_agents).map(|_| DVector::from_fn(2, |_, _| rng.random_range(-0.5..0.5))).collect(),
    )
    .unwrap();
    let sets = (0..n_agents).map(|_| common::random_box(2, &mut rng)).collect();
    let g2 = GameSpec::new(costs, sets, ring, 1).unwrap();
    pass &= iterations::admissible_rows(&g2, &FeedbackScheme::krasnoselskij(), SplitCounts::memoryless(1)) == vec![2];
    let r2 = certify_regularity(&g2, RegularityCase::Nonexpansive, 1000, 2).unwrap();
    pass &= r2.holds && r2.ne_margin >= -1e-9;
    lines.push(format!("row 2 NE margin {:.1e}", r2.ne_margin));

    // Row 3: −qQ ⪯ C ≺ 0, P = Pᵀ, ν even.
    let n = 2;
    let q_matrix = common::random_spd(n, &mut rng);
    let c_matrix = -q_matrix.matrix() * 0.8;
    let net = Topology::SmallWorld { p_shortcut: 0.3 }.generate(n_agents, 3).unwrap();
    let costs = CostParams::new(
        q_matrix,
        c_matrix,
        vec![1.0; n_agents],
        (0..n_agents).map(|_| DVector::from_fn(n, |_, _| rng.random_range(-0.5..0.5))).collect(),
    )
    .unwrap();
    let sets = (0..n_agents).map(|_| common::random_box(n, &mut rng)).collect();
    let g3 = GameSpec::new(costs, sets, net, 2).unwrap();
    pass &= iterations::admissible_rows(&g3, &FeedbackScheme::PicardBanach, SplitCounts::symmetric(2).unwrap()).contains(&3);
    let r3 = certify_regularity(&g3, RegularityCase::FirmlyNonexpansive, 1000, 3).unwrap();
    pass &= r3.holds && r3.fne_margin >= -1e-9;
    lines.push(format!("row 3 FNE margin {:.1e}", r3.fne_margin));

    // Row 4: C ≻ 0, P = Pᵀ: demand response with ρ = 0.1, λ = 2.
    let sigma0 = synthetic_sigma0(24);
    let net = Topology::UndirectedRing.generate(5, 0).unwrap().hierarchical(2).unwrap();
    let dr = DemandResponseConfig::random(10, 24, 0.1, 2.0, &sigma0, 4).build(net).unwrap();
    pass &= iterations::admissible_rows(&dr.game, &FeedbackScheme::mann(), SplitCounts::symmetric(2).unwrap()) == vec![4];
    let r4 = certify_regularity(&dr.game, RegularityCase::StrictlyPseudoContractive, 1000, 4).unwrap();
    pass &= r4.holds && r4.mon_margin >= -1e-9;
    lines.push(format!("row 4 monotonicity margin {:.1e}, SPC ρ {:.3}", r4.mon_margin, r4.spc_rho));

    outcome(pass, lines.join(", "))
}

fn hierarchical() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut pass = true;
    let mut cases = 0;
    let mut primitive_cases = 0;
    let mut worst_norm: f64 = 0.0;
    for _ in 0..40 {
        let m = rng.random_range(2..=8);
        let pm = common::symmetric_doubly_stochastic(m, rng.random::<f64>() < 0.8, &mut rng);
        for b in 1..=5 {
            let p = pm.hierarchical(b).unwrap();
            cases += 1;
            pass &= p.is_doubly_stochastic() && p.is_symmetric() == pm.is_symmetric();
            if pm.is_primitive() {
                primitive_cases += 1;
                pass &= p.is_primitive();
            }
            let diff = (linalg::spectral_norm(p.matrix()) - linalg::spectral_norm(pm.matrix())).abs();
            worst_norm = worst_norm.max(diff);
            pass &= diff <= 1e-9;
        }
    }
    outcome(
        pass,
        format!("{cases} cases ({primitive_cases} with primitive P_M), max |‖P‖₂ − ‖P_M‖₂| = {worst_norm:.1e}"),
    )
}

/// An independent membership test for the primitives drawn below.
fn feasible(prims: &[PrimitiveSet], x: &[f64]) -> bool {
    prims.iter().all(|p| match p {
        PrimitiveSet::Box { lo, hi } => x.iter().enumerate().all(|(i, v)| *v >= lo[i] && *v <= hi[i]),
        PrimitiveSet::Halfspace { a, b } => x.iter().enumerate().map(|(i, v)| a[i] * v).sum::<f64>() <= *b,
        PrimitiveSet::Ball { center, radius } => {
            x.iter().enumerate().map(|(i, v)| (v - center[i]).powi(2)).sum::<f64>() <= radius * radius
        }
        PrimitiveSet::Affine { .. } => unreachable!(),
    })
}

fn grid_distance(prims: &[PrimitiveSet], q: &SpdMatrix, y: &DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>, h: f64) -> f64 {
    let n = y.len();
    let counts: Vec<usize> = (0..n).map(|i| ((hi[i] - lo[i]) / h).ceil() as usize + 1).collect();
    let total: usize = counts.iter().product();
    let mut best = f64::INFINITY;
    let mut x = vec![0.0; n];
    for mut k in 0..total {
        for i in 0..n {
            x[i] = (lo[i] + (k % counts[i]) as f64 * h).min(hi[i]);
            k /= counts[i];
        }
        if feasible(prims, &x) {
            let d = DVector::from_fn(n, |i, _| x[i] - y[i]);
            best = best.min(q.norm(&d));
        }
    }
    best
}

fn projection_grid() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let opts = ProjectionOptions::default();
    let mut pass = true;
    let mut worst_excess: f64 = f64::NEG_INFINITY;
    let mut worst_invariant: f64 = f64::NEG_INFINITY;
    for k in 0..200 {
        let n = 1 + k % 3;
        let h = [1e-3, 5e-3, 2e-2][n - 1];
        let lo = DVector::from_fn(n, |_, _| rng.random_range(-1.0..0.0));
        let hi = DVector::from_fn(n, |i, _| lo[i] + rng.random_range(0.5..1.5));
        let inside = DVector::from_fn(n, |i, _| rng.random_range(lo[i]..hi[i]));
        let mut prims = vec![PrimitiveSet::boxed(lo.clone(), hi.clone()).unwrap()];
        let with_ball = rng.random::<f64>() < 0.3;
        if rng.random::<f64>() < 0.6 {
            let a = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            if a.norm() > 0.1 {
                let b = a.dot(&inside) + rng.random_range(0.0..0.3) * a.norm();
                prims.push(PrimitiveSet::halfspace(a, b).unwrap());
            }
        }
        if with_ball {
            prims.push(PrimitiveSet::ball(inside.clone(), rng.random_range(0.3..1.0)).unwrap());
        }
        let q = if with_ball {
            SpdMatrix::scaled_identity(n, rng.random_range(0.5..2.0))
        } else {
            common::random_spd(n, &mut rng)
        };
        let set = ConvexSet::new(prims.clone()).unwrap();
        let y = DVector::from_fn(n, |i, _| rng.random_range(lo[i] - 1.0..hi[i] + 1.0));
        let w = DVector::from_fn(n, |i, _| rng.random_range(lo[i] - 1.0..hi[i] + 1.0));
        let proj = set.projector_with(&q, opts).unwrap();
        let py = proj.project(&y).unwrap();
        let pw = proj.project(&w).unwrap();

        let d_proj = q.norm(&(&py - &y));
        let d_grid = grid_distance(&prims, &q, &y, &lo, &hi, h);
        // Some grid point lies within √n·h/2 of the projection in the
        // Euclidean norm; allow twice that in the Q-norm.
        let slack = q.max_eigenvalue().sqrt() * (n as f64).sqrt() * h;
        worst_excess = worst_excess.max((d_grid - d_proj) / slack);
        pass &= d_proj <= d_grid + 1e-9 && d_grid <= d_proj + slack;

        let member = set.max_violation(&py);
        let idem = q.norm(&(&proj.project(&py).unwrap() - &py));
        let fne = q.norm_sq(&(&py - &pw)) - q.inner(&(&y - &w), &(&py - &pw));
        worst_invariant = worst_invariant.max(member).max(idem).max(fne);
        pass &= member <= 10.0 * opts.tol && idem <= 2.0 * opts.tol && fne <= 10.0 * opts.tol;
    }
    outcome(
        pass,
        format!(
            "200 instances, worst (grid − projected distance)/resolution {worst_excess:.2}, worst invariant violation {worst_invariant:.1e}"
        ),
    )
}

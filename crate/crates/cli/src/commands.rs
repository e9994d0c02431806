use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use nagame::applications::experiments::{
    run_demand_experiment, run_opinion_experiment, summarize_demand, summarize_opinion,
    DemandExperiment, OpinionExperiment,
};
use nagame::equilibrium::certify_nash;
use nagame::iterations::{self, convergence_table};
use nagame::{DeviationMode, Error, Network, NashCertificate, Topology};
use serde_json::json;

use crate::config::{ExperimentConfig, Sweep, SweepKind};
use crate::output;
use crate::Status;

fn out_dir(cli: Option<PathBuf>, cfg: &Path) -> Result<PathBuf> {
    let dir = cli.unwrap_or_else(|| cfg.to_path_buf());
    fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
    Ok(dir)
}

fn certificate(
    game: &nagame::GameSpec,
    x: &nagame::StackedSignal,
    mode: DeviationMode,
) -> std::result::Result<NashCertificate, String> {
    certify_nash(game, x, mode).map_err(|e| e.to_string())
}

pub fn run(
    config: &Path,
    seed: Option<u64>,
    force: bool,
    trajectory: bool,
    out: Option<PathBuf>,
) -> Result<Status> {
    let cfg = ExperimentConfig::load(config)?;
    let seed = seed.or(cfg.seed).unwrap_or(0);
    let p = cfg.prepare(seed)?;
    let rows = iterations::admissible_rows(&p.game, &p.scheme, p.split);
    if rows.is_empty() && !force {
        bail!(
            "no convergence guarantee covers {} with (ν₁, ν₂) = ({}, {}) on this game; \
             see `nagame certify`, or pass --force to run anyway",
            p.scheme.name(),
            p.split.nu1,
            p.split.nu2
        );
    }
    let r = iterations::run(&p.game, &p.scheme, p.split, &p.stop, &p.z0, trajectory)?;
    let na = certificate(&p.game, &r.final_strategies, DeviationMode::Network { nu: p.game.nu() });
    let mf = certificate(&p.game, &r.final_strategies, DeviationMode::MeanField);

    let dir = out_dir(out, &cfg.output.dir)?;
    output::residuals(&dir.join("residuals.csv"), &r.residual_history)?;
    output::strategies(&dir.join("strategies.csv"), &r.final_strategies)?;
    if let Some(t) = &r.trajectory {
        output::trajectory(&dir.join("trajectory.csv"), t)?;
    }
    for (name, cert) in [("certificate.json", &na), ("certificate_mf.json", &mf)] {
        match cert {
            Ok(c) => output::json(&dir.join(name), c)?,
            Err(e) => eprintln!("warning: no {name}: {e}"),
        }
    }
    let max_eps = |c: &std::result::Result<NashCertificate, String>| c.as_ref().ok().map(|c| c.max_eps);
    let manifest = json!({
        "command": "run",
        "version": env!("CARGO_PKG_VERSION"),
        "seed": seed,
        "force": force,
        "config": cfg,
        "scheme": p.scheme,
        "split": p.split,
        "stopping": p.stop,
        "admissible_rows": rows,
        "result": {
            "iterations": r.iterations,
            "converged": r.converged,
            "period": r.period,
            "final_residual": r.residual_history.last(),
            "na_max_eps": max_eps(&na),
            "mf_max_eps": max_eps(&mf),
        },
    });
    output::json(&dir.join("manifest.json"), &manifest)?;

    let last = r.residual_history.last().copied().unwrap_or(0.0);
    if r.converged {
        println!(
            "converged after {} iterations (residual {last:.3e})",
            r.iterations
        );
    } else {
        let period = r.period.map(|p| format!(", period-{p} cycle")).unwrap_or_default();
        println!(
            "did not converge within {} iterations (residual {last:.3e}{period})",
            r.iterations
        );
    }
    if let Some(e) = max_eps(&na) {
        println!("network Nash ε: {e:.3e}");
    }
    if let Some(e) = max_eps(&mf) {
        println!("mean-field ε: {e:.3e}");
    }
    Ok(if r.converged {
        Status::Done
    } else {
        Status::NotConverged
    })
}

fn verdict(holds: bool) -> &'static str {
    if holds {
        "holds"
    } else {
        "fails"
    }
}

pub fn certify(config: &Path, seed: Option<u64>) -> Result<Status> {
    let cfg = ExperimentConfig::load(config)?;
    let seed = seed.or(cfg.seed).unwrap_or(0);
    let p = cfg.prepare(seed)?;
    let net = p.game.network().certify();
    println!(
        "network: N = {}, ‖P‖₂ = {:.6}, μ = {:.6}, symmetric {}, doubly stochastic {}, primitive {}",
        p.game.population(),
        net.operator_norm,
        net.mu,
        net.symmetric,
        net.doubly_stochastic,
        net.primitive
    );
    if let Some(w) = net.stationary_norm {
        println!("network: ‖P‖ weighted by its stationary distribution = {w:.6}");
    }
    println!("game: n = {}, ν = {}", p.game.dim(), p.game.nu());
    for row in convergence_table(&p.game) {
        println!(
            "row {} {:<13} {:<11} cost {:<16} {} (margin {:.3e}); network {:<15} {} (margin {:.3e}){}",
            row.row,
            row.feedback,
            row.split,
            row.cost_condition,
            verdict(row.cost.holds),
            row.cost.margin,
            row.network_condition,
            verdict(row.network.holds),
            row.network.margin,
            if row.applies { "  => admissible" } else { "" }
        );
    }
    let rows = iterations::admissible_rows(&p.game, &p.scheme, p.split);
    println!(
        "configured {} with (ν₁, ν₂) = ({}, {}): {}",
        p.scheme.name(),
        p.split.nu1,
        p.split.nu2,
        if rows.is_empty() {
            "no guarantee".to_string()
        } else {
            format!("guaranteed by row(s) {rows:?}")
        }
    );
    Ok(Status::Done)
}

pub fn sweep(
    config: Option<&Path>,
    preset: Option<SweepKind>,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> Result<Status> {
    let (sweep, dir) = match (config, preset) {
        (Some(path), _) => {
            let cfg = ExperimentConfig::load(path)?;
            (cfg.sweep(seed.or(cfg.seed))?, out_dir(out, &cfg.output.dir)?)
        }
        (None, Some(kind)) => {
            let sweep = match kind {
                SweepKind::Opinion => Sweep::Opinion(OpinionExperiment {
                    base_seed: seed.unwrap_or(0),
                    ..Default::default()
                }),
                SweepKind::Demand => Sweep::Demand(DemandExperiment {
                    base_seed: seed.unwrap_or(0),
                    ..Default::default()
                }),
            };
            (sweep, out_dir(out, Path::new("out"))?)
        }
        (None, None) => bail!("give --config or --preset"),
    };
    let (runs, converged) = match &sweep {
        Sweep::Opinion(e) => {
            let rows = run_opinion_experiment(e)?;
            let summary = summarize_opinion(&rows);
            output::table(&dir.join("results.csv"), &rows)?;
            output::table(&dir.join("summary.csv"), &summary)?;
            for s in &summary {
                println!(
                    "{:<15} {:<14} N = {:>4}: {}/{} converged, mean iterations {:.1} [{:.1}, {:.1}]",
                    s.population, s.topology, s.n_agents, s.converged, s.runs, s.mean_iterations, s.q05, s.q95
                );
            }
            (rows.len(), rows.iter().filter(|r| r.converged).count())
        }
        Sweep::Demand(e) => {
            let rows = run_demand_experiment(e)?;
            let summary = summarize_demand(&rows);
            output::table(&dir.join("results.csv"), &rows)?;
            output::table(&dir.join("summary.csv"), &summary)?;
            for s in &summary {
                let nu = s.nu.map_or("central".to_string(), |nu| format!("ν = {nu}"));
                println!(
                    "N = {:>4}, {:<10}: {}/{} converged, mean iterations {:.1}, mean ε {:.4e}",
                    s.n_agents, nu, s.converged, s.runs, s.mean_iterations, s.mean_max_eps
                );
            }
            (rows.len(), rows.iter().filter(|r| r.converged).count())
        }
    };
    let manifest = json!({
        "command": "sweep",
        "version": env!("CARGO_PKG_VERSION"),
        "sweep": sweep,
        "runs": runs,
        "converged": converged,
    });
    output::json(&dir.join("manifest.json"), &manifest)?;
    Ok(if converged == runs {
        Status::Done
    } else {
        Status::NotConverged
    })
}

pub fn netgen(
    topology: Topology,
    size: usize,
    seed: u64,
    clusters: Option<usize>,
    out: &Path,
) -> Result<Status> {
    let mut net = topology.generate(size, seed)?;
    if let Some(b) = clusters {
        net = net.hierarchical(b)?;
    }
    net.write_csv(out)
        .with_context(|| format!("cannot write {}", out.display()))?;
    println!("{} agents written to {}", net.size(), out.display());
    Ok(Status::Done)
}

pub fn nubar(network: &Path, eps_d: f64, max_nu: usize) -> Result<Status> {
    let net = Network::read_csv(network)
        .with_context(|| format!("cannot read network {}", network.display()))?;
    match net.precompute_nu_bar(eps_d, max_nu) {
        Ok(nu) => {
            println!("{nu}");
            Ok(Status::Done)
        }
        Err(Error::NoConvergence { max_nu }) => {
            eprintln!("local averages are not within {eps_d:e} of the mean for any ν ≤ {max_nu}");
            Ok(Status::NotConverged)
        }
        Err(e) => Err(e.into()),
    }
}

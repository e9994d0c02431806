mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use config::SweepKind;

/// Equilibrium seeking in network aggregative games.
#[derive(Parser, Debug)]
#[command(name = "nagame", version)]
struct Cli {
    /// Worker threads for parallel sweeps and per-agent work.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one iteration and certify its outcome.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Run even if no convergence guarantee covers the scheme.
        #[arg(long)]
        force: bool,
        /// Also write every iterate.
        #[arg(long)]
        trajectory: bool,
        /// Output directory, overriding the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check which convergence guarantees apply.
    Certify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run an experiment table.
    Sweep {
        #[arg(long, required_unless_present = "preset")]
        config: Option<PathBuf>,
        /// Built-in experiment instead of a config file.
        #[arg(long, conflicts_with = "config")]
        preset: Option<SweepKind>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a generated network as a CSV matrix.
    Netgen {
        #[arg(long, value_enum)]
        topology: TopologyArg,
        #[arg(long)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.3)]
        p_shortcut: f64,
        /// Replace each node by a fully mixed cluster of this size.
        #[arg(long)]
        clusters: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Communication rounds after which every local average is ε_d-close to
    /// the population mean.
    Nubar {
        #[arg(long)]
        network: PathBuf,
        #[arg(long)]
        eps_d: f64,
        #[arg(long, default_value_t = 100_000)]
        max_nu: usize,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TopologyArg {
    Complete,
    DirectedRing,
    UndirectedRing,
    SmallWorld,
    Averaging,
}

/// Finished commands: 0 when converged (or nothing to converge), 2 when a
/// run ended without converging.
enum Status {
    Done,
    NotConverged,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match cli.command {
        Command::Run {
            config,
            seed,
            force,
            trajectory,
            out,
        } => commands::run(&config, seed, force, trajectory, out),
        Command::Certify { config, seed } => commands::certify(&config, seed),
        Command::Sweep {
            config,
            preset,
            seed,
            out,
        } => commands::sweep(config.as_deref(), preset, seed, out),
        Command::Netgen {
            topology,
            size,
            seed,
            p_shortcut,
            clusters,
            out,
        } => {
            let topology = match topology {
                TopologyArg::Complete => nagame::Topology::CompleteNoSelf,
                TopologyArg::DirectedRing => nagame::Topology::DirectedRing,
                TopologyArg::UndirectedRing => nagame::Topology::UndirectedRing,
                TopologyArg::SmallWorld => nagame::Topology::SmallWorld { p_shortcut },
                TopologyArg::Averaging => nagame::Topology::Averaging,
            };
            commands::netgen(topology, size, seed, clusters, &out)
        }
        Command::Nubar {
            network,
            eps_d,
            max_nu,
        } => commands::nubar(&network, eps_d, max_nu),
    };
    match result {
        Ok(Status::Done) => ExitCode::SUCCESS,
        Ok(Status::NotConverged) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

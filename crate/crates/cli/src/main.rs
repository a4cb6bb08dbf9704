//! `pcnlab`: batch front end for privacy analysis and PCN simulation.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use commands::RunContext;
use config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "pcnlab", version, about = "Privacy/utility analysis and simulation of noisy PCN balances")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form and LP privacy over an alpha grid.
    Analyze(Args),
    /// Replicated simulation at a single alpha.
    Simulate(Args),
    /// Replicated simulations over an alpha grid.
    Sweep(Args),
    /// Generate a topology and write it as a snapshot CSV.
    GenTopology(Args),
}

#[derive(clap::Args)]
struct Args {
    /// JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for replicas (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Output directory (default: config `output`, else `out`).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<()> {
    let (args, cmd): (&Args, fn(&RunContext) -> Result<()>) = match &cli.command {
        Command::Analyze(a) => (a, commands::analyze),
        Command::Simulate(a) => (a, commands::simulate),
        Command::Sweep(a) => (a, commands::sweep),
        Command::GenTopology(a) => (a, commands::gen_topology),
    };
    let config = ExperimentConfig::load(&args.config)?;
    let seed = config.seed(args.seed)?;
    let out = args
        .out
        .clone()
        .or_else(|| config.output.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let ctx = RunContext { config, seed, out };
    match args.jobs {
        Some(0) => anyhow::bail!("--jobs must be at least 1"),
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build()
            .context("building thread pool")?
            .install(|| cmd(&ctx)),
        None => cmd(&ctx),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

//! `sts-exo`: optimize, simulate and inspect the passive sit-to-stand
//! exoskeleton from a config file.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use log::{error, info};

use crate::commands::Session;
use crate::config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "sts-exo", version, about = "Passive sit-to-stand exoskeleton design toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML config file (`.json` is read as JSON). Defaults apply without one.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Design file (mechanism, placement and spring name); the shipped
    /// reference design when absent.
    #[arg(long, global = true)]
    design: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Three-objective mechanism search; writes the Pareto front and a knee-point pick.
    Optimize,
    /// Sit-to-stand and stand-to-sit transitions per user; writes traces and feasibility.
    Simulate,
    /// Static knee-load sweeps per user.
    Sweep,
    /// Torso controller on a pressure log (or the built-in figure-8 script).
    ControllerSim,
    /// Objectives, feasibility and peak loads of the design for the configured user.
    Report,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Optimize => "optimize",
            Command::Simulate => "simulate",
            Command::Sweep => "sweep",
            Command::ControllerSim => "controller-sim",
            Command::Report => "report",
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(workers) = cli.workers {
        config.workers = workers;
    }
    if let Some(out) = cli.out {
        config.out = out;
    }
    let hash = config.hash();
    let (seed, out_dir) = (config.seed, config.out.clone());
    let session = Session::new(config, cli.design.as_deref())?;
    let artifacts = match cli.command {
        Command::Optimize => commands::optimize(&session)?,
        Command::Simulate => commands::simulate(&session)?,
        Command::Sweep => commands::sweep(&session)?,
        Command::ControllerSim => commands::controller_sim(&session)?,
        Command::Report => commands::report(&session)?,
    };
    artifacts.write(&out_dir, cli.command.name(), &hash, seed)?;
    for name in artifacts.names() {
        info!("wrote {}", out_dir.join(name).display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("STS_EXO_LOG", "warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e:#}");
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

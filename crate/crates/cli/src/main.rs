//! `quicksearch`: run schedules, simulations and analytic tables from the
//! command line. Every command writes CSV (or a plain table for `schedule`)
//! to stdout or to `--out`, in which case a manifest is written beside it.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use quicksearch::SearchError;
use thiserror::Error;

use crate::commands::{BaselineArgs, ExtremesArgs, GainsArgs, RegionArgs, SimulateArgs};
use crate::config::ProblemArgs;

/// Master seed used when `--seed` is absent, so default runs are reproducible.
pub const DEFAULT_SEED: u64 = 0x5eed_2024;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Search(SearchError::Infeasible(_)) => 3,
            CliError::Search(SearchError::Domain(_)) => 4,
            CliError::Search(_) | CliError::Io(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "quicksearch", version, about = "Adaptive search for rare streams")]
struct Cli {
    /// Master seed for every random draw
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Worker threads (0 = all cores); output does not depend on it
    #[arg(long, global = true, env = "QUICKSEARCH_THREADS")]
    threads: Option<usize>,
    /// Output file; stdout when absent
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the sampling schedule for a configuration
    Schedule(ProblemArgs),
    /// Monte Carlo trials of the scheduled search, one CSV row per trial
    Simulate(SimulateArgs),
    /// Detectability region over (signal exponent, prior exponent)
    Region(RegionArgs),
    /// Normalized extreme cdfs: exact, empirical and limit
    Extremes(ExtremesArgs),
    /// Agility or scaling gain bounds per refinement count
    Gains(GainsArgs),
    /// Budget and error of the adaptive search against baselines
    Baseline(BaselineArgs),
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot set thread count: {e}")))?;
    }
    let out = cli.out.as_deref();
    match &cli.command {
        Command::Schedule(args) => commands::schedule(args, cli.seed, out),
        Command::Simulate(args) => commands::simulate(args, cli.seed, out),
        Command::Region(args) => commands::region(args, cli.seed, out),
        Command::Extremes(args) => commands::extremes(args, cli.seed, out),
        Command::Gains(args) => commands::gains(args, cli.seed, out),
        Command::Baseline(args) => commands::baseline(args, cli.seed, out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

//! `mpamp`: state evolution, rate-distortion curves, coding-rate schedule
//! optimization, Pareto sweeps, Monte Carlo simulation, and the multi-worker
//! harness behind one command-line entry point.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mpamp_core::Error as CoreError;

#[derive(Parser)]
#[command(name = "mpamp", version, about = "Lossy multi-processor AMP toolkit")]
struct Cli {
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for result files.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Overrides the seed from the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker-thread count (1 guarantees bit-exact reproducibility).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// State-evolution trajectory for a schedule (lossless if none given).
    Se,
    /// Rate-distortion curve of the per-node message source.
    Rd,
    /// Optimal coding-rate schedule for a cost model and MSE target.
    Dp,
    /// Sweep relative costs and MSE targets; frontier, convexity, fits.
    Pareto,
    /// Monte Carlo MP-AMP trials against the SE prediction.
    Simulate,
    /// Replay a schedule on the multi-worker cluster.
    Harness {
        /// Number of worker nodes (overrides the configuration).
        #[arg(long)]
        nodes: Option<usize>,
        /// Schedule CSV to replay (overrides `schedule_csv`).
        #[arg(long)]
        schedule: Option<PathBuf>,
        /// `channel` (in-process) or `socket` (local TCP).
        #[arg(long)]
        transport: Option<String>,
    },
}

/// CLI failure with its exit code: 2 config, 3 infeasible, 4 numerical.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Core(CoreError),
    Io(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(m) => write!(f, "io error: {m}"),
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(CoreError::Domain(_)) => 2,
            CliError::Core(CoreError::Infeasible { .. }) => 3,
            CliError::Core(_) => 4,
            CliError::Io(_) => 1,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        // Ignore the error if a pool already exists (tests set one up).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    let result = match &cli.command {
        Command::Se => commands::se::run(&cli),
        Command::Rd => commands::rd::run(&cli),
        Command::Dp => commands::dp::run(&cli),
        Command::Pareto => commands::pareto::run(&cli),
        Command::Simulate => commands::simulate::run(&cli),
        Command::Harness {
            nodes,
            schedule,
            transport,
        } => commands::harness::run(&cli, *nodes, schedule.as_deref(), transport.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mpamp: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use robust_american::Error as CoreError;

/// Environment variable holding the number of worker threads.
pub const WORKERS_ENV: &str = "ROBAM_WORKERS";

#[derive(Debug, Parser)]
#[command(name = "robam", version, about = "Robust pricing and superhedging of American options on finite lattices")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Debug, Clone, Default, clap::Args)]
pub struct Flags {
    /// JSON input file (scenario, gap-demo, decomposition or integration config).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Directory for report.json and CSV tables; without it the report goes to stdout.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Seed for generated instances and random test processes.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Epsilon-modification level.
    #[arg(long, global = true, value_name = "FLOAT")]
    pub eps: Option<f64>,
    /// Set non-convergent pathwise integrals to zero.
    #[arg(long, global = true)]
    pub strict_integration: bool,
    /// Cap on the number of enumerated stopping rules.
    #[arg(long, global = true, value_name = "N")]
    pub rule_cap: Option<u128>,
    /// Comparison tolerance.
    #[arg(long, global = true, value_name = "FLOAT")]
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Robust price by the enlarged primal LP (and dynamic programming without options).
    Price,
    /// American superhedging price and strategy tables.
    Hedge,
    /// The built-in duality-gap example and its value chain.
    GapDemo,
    /// Azéma decomposition of an enlarged measure into a martingale measure and a randomized stopping time.
    Decompose,
    /// Pathwise integration and quadratic-variation experiments.
    Integrate,
    /// All values of the pricing/hedging chain on one scenario.
    Chain,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Price => "price",
            Command::Hedge => "hedge",
            Command::GapDemo => "gap-demo",
            Command::Decompose => "decompose",
            Command::Integrate => "integrate",
            Command::Chain => "chain",
        }
    }
}

/// A computed result that violates an invariant the run checks.
#[derive(Debug)]
pub struct Breach(pub String);

impl std::fmt::Display for Breach {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "invariant breach: {}", self.0)
    }
}

impl std::error::Error for Breach {}

/// Input that could not be read or parsed.
#[derive(Debug)]
pub struct InputError(pub String);

impl std::fmt::Display for InputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

fn core_code(e: &CoreError) -> u8 {
    match e {
        CoreError::InfeasibleClass(_) | CoreError::InfeasiblePin { .. } | CoreError::SurvivalExhausted { .. } => 2,
        CoreError::RuleCap { .. } | CoreError::PathCap { .. } => 3,
        CoreError::ChainAborted { source, .. } => core_code(source),
        CoreError::InvalidLp(_) | CoreError::Solver(_) => 1,
        _ => 4,
    }
}

/// 0 ok, 1 internal failure or invariant breach, 2 infeasible, 3 cap
/// exceeded, 4 schema or parse error.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<CoreError>() {
            return core_code(e);
        }
        if cause.is::<serde_json::Error>() || cause.is::<InputError>() {
            return 4;
        }
        if cause.is::<Breach>() {
            return 1;
        }
    }
    1
}

fn configure_workers() -> Result<usize> {
    let n = match std::env::var(WORKERS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| InputError(format!("{WORKERS_ENV} must be a positive integer, got '{v}'")))?,
        Err(_) => return Ok(rayon::current_num_threads()),
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("configuring the worker pool")?;
    Ok(n)
}

fn run(cli: &Cli) -> Result<()> {
    let workers = configure_workers()?;
    let outcome = commands::dispatch(cli.command, &cli.flags)?;
    output::emit(cli.command, &cli.flags, workers, outcome)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if let Some(CoreError::ChainAborted { partial, .. }) = e.downcast_ref::<CoreError>() {
                eprintln!("partial chain:\n{}", partial.summary());
            }
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

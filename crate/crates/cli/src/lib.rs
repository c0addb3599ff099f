//! Command-line front-end: canonicalize designs, compute `ν` bounds, run
//! the identity checks, compare risks and evaluate predictive densities.
//!
//! Exit codes: 0 success, 1 usage error, 2 canonicalization failure,
//! 3 identity failure, 4 Monte Carlo guard breach.

pub mod commands;
pub mod config;
mod error;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::ExperimentConfig;
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "alphapred",
    version,
    about = "Predictive densities for linear regression under alpha-divergence loss"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Experiment configuration (JSON); built-in defaults when absent.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory for result files.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; all available cores when absent.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Reduce the design to canonical form and check its invariants.
    Canonicalize,
    /// Ranges of nu for which the shrinkage estimators dominate.
    Bounds,
    /// Numerical checks of the identities behind the main results.
    Identities,
    /// Monte Carlo risks of the predictive procedures.
    RiskCompare,
    /// Evaluate a predictive density at given points.
    DensityEval,
}

fn load(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::from_path(path)?,
        None => ExperimentConfig::from_json("{}")?,
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn dispatch(cli: &Cli) -> Result<String, CliError> {
    let config = load(cli)?;
    let out = &cli.out;
    match cli.command {
        Command::Canonicalize => commands::canonicalize(&config, out),
        Command::Bounds => commands::bounds(&config, out),
        Command::Identities => commands::identities(&config, out),
        Command::RiskCompare => commands::risk_compare(&config, out),
        Command::DensityEval => commands::density_eval(&config, out),
    }
}

/// Run a parsed command line; returns the summary to print.
pub fn run(cli: &Cli) -> Result<String, CliError> {
    match cli.threads {
        Some(0) => Err(CliError::Usage("--threads must be positive".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Usage(e.to_string()))?
            .install(|| dispatch(cli)),
        None => dispatch(cli),
    }
}

//! Library side of the `rl2ml` command: argument definitions, parameter
//! resolution and the CSV producers behind each subcommand.

pub mod commands;
pub mod config;
pub mod format;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] rl2ml::Error),
}

impl CliError {
    /// 2 for configuration or validation problems, 3 for I/O, 4 for numerical
    /// non-convergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io { .. } => 3,
            CliError::Core(rl2ml::Error::Io(_)) => 3,
            CliError::Core(rl2ml::Error::NoConvergence { .. }) => 4,
            CliError::Core(_) => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "rl2ml", version, about = "Coefficient tables, weight curves, estimator simulations, gamma selection and frontier sweeps")]
pub struct Cli {
    /// TOML file with default parameters; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// β_{K−1} and α_K for K = 1..N.
    Table(TableArgs),
    /// w, ∂γw, ∂²γw and p^{−γ} on a grid of p.
    Weights(WeightsArgs),
    /// Monte-Carlo check of both estimators on a synthetic categorical policy.
    Simulate(SimulateArgs),
    /// Choose γ from a success-count file.
    Select(SelectArgs),
    /// Truncation-order window (M_need, M_cap) for a γ grid.
    Frontier(FrontierArgs),
}

#[derive(Debug, Args, Default)]
pub struct TableArgs {
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Truncation order M ≤ N (defaults to N).
    #[arg(long)]
    pub m: Option<usize>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct WeightsArgs {
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Comma-separated p values in [0, 1].
    #[arg(long)]
    pub p: Option<String>,
    /// Evenly spaced grid on [0, 1] when --p is absent (default 101 points).
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct SimulateArgs {
    /// Comma-separated γ values (default 0,0.5,1,2).
    #[arg(long)]
    pub gamma: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Number of simulated groups (default 100000).
    #[arg(long)]
    pub trials: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated logits (default: the built-in 8-state policy).
    #[arg(long, allow_hyphen_values = true)]
    pub logits: Option<String>,
    /// Comma-separated indices of the correct states.
    #[arg(long)]
    pub correct: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the per-trial success counts as a counts file.
    #[arg(long)]
    pub counts_out: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct SelectArgs {
    /// Counts file with lines prompt_id,K,N.
    #[arg(long)]
    pub counts: Option<PathBuf>,
    /// Variance penalty weight; required.
    #[arg(long)]
    pub lambda_var: Option<f64>,
    /// pass1, passk:<k> or logp[:<tau>] (default pass1).
    #[arg(long)]
    pub metric: Option<String>,
    #[arg(long)]
    pub gamma_min: Option<f64>,
    #[arg(long)]
    pub gamma_max: Option<f64>,
    #[arg(long)]
    pub grid_points: Option<usize>,
    #[arg(long)]
    pub newton_iters: Option<usize>,
    /// Warm-start target for Newton (default 0.8).
    #[arg(long)]
    pub gamma_init: Option<f64>,
    /// Smoothing pseudo-counts (default 1).
    #[arg(long)]
    pub a: Option<f64>,
    #[arg(long)]
    pub b: Option<f64>,
    /// Must match the N of the counts file when given.
    #[arg(long)]
    pub n: Option<usize>,
    /// Trace CSV (gamma,U,R,objective).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct FrontierArgs {
    /// Comma-separated γ grid; an empty string gives a header-only file.
    #[arg(long)]
    pub gamma: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub p_min: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub a_max: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Runs a parsed command line and returns the text meant for stdout.
pub fn run(cli: Cli) -> Result<String, CliError> {
    let file = cli.config.as_deref().map(config::ConfigFile::load).transpose()?;
    let file = file.as_ref();
    match cli.command {
        Command::Table(a) => commands::table(a, file),
        Command::Weights(a) => commands::weights(a, file),
        Command::Simulate(a) => commands::simulate(a, file),
        Command::Select(a) => commands::select(a, file),
        Command::Frontier(a) => commands::frontier(a, file),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_code_mapping() {
        let io = || std::io::Error::new(std::io::ErrorKind::NotFound, "x");
        assert_eq!(CliError::Config("x".into()).exit_code(), 2);
        assert_eq!(CliError::Io { path: "a".into(), source: io() }.exit_code(), 3);
        assert_eq!(CliError::Core(rl2ml::Error::Io(io())).exit_code(), 3);
        let stuck = rl2ml::Error::NoConvergence {
            routine: "newton",
            iterations: 8,
        };
        assert_eq!(CliError::from(stuck).exit_code(), 4);
        assert_eq!(CliError::from(rl2ml::Error::InvalidConfig("x".into())).exit_code(), 2);
    }
}

//! `reps` — regularized policy-search experiments on tabular MDPs.
//!
//! Subcommands:
//! - `solve`:  run the configured solver, extract the greedy policy from the
//!   candidate occupancy measure, and write `iterates.csv`, `policy.json`,
//!   and `summary.json`. Byte-reproducible for a fixed config and seed.
//! - `verify`: solve to high accuracy and run the inequality battery (weak
//!   duality, smoothness envelope, accelerated rate, optimality certificate,
//!   extraction bound, and estimator dispersion for sampled runs); write
//!   `reports.jsonl` and `summary.json`.
//! - `bench`:  run the solver once with real per-record timings in the CSV.
//!
//! Exit codes: 0 success, 1 configuration error, 2 numerical failure,
//! 3 verification failure.

mod config;
mod parallel;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::ExperimentConfig;

/// Process-level failure classes, mapped one-to-one onto exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Unreadable, unparsable, or invalid configuration (exit 1).
    Config(String),
    /// The solver or an evaluation failed numerically (exit 2).
    Numerical(String),
    /// A verification check did not hold (exit 3).
    Verification,
}

/// Errors raised while building the experiment from its configuration are
/// configuration errors; `run.rs` maps solver-time errors explicitly.
impl From<reps_core::Error> for CliError {
    fn from(e: reps_core::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "reps", version, about = "Regularized policy search on tabular MDPs")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the configured solver and write artifacts.
    Solve {
        /// Path to the experiment configuration (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Output directory (created if missing).
        #[arg(long)]
        out: PathBuf,
        /// Override the instance seed from the configuration.
        #[arg(long)]
        seed: Option<u64>,
        /// Also run the verification battery and fail on any warning.
        #[arg(long)]
        strict: bool,
    },
    /// Run the verification battery against a high-accuracy reference.
    Verify {
        /// Path to the experiment configuration (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Output directory (created if missing).
        #[arg(long)]
        out: PathBuf,
        /// Override the instance seed from the configuration.
        #[arg(long)]
        seed: Option<u64>,
        /// Treat warnings (unconverged reference, sample coverage) as fatal.
        #[arg(long)]
        strict: bool,
    },
    /// Run the solver once and report throughput; timings are real.
    Bench {
        /// Path to the experiment configuration (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Output directory (created if missing).
        #[arg(long)]
        out: PathBuf,
        /// Override the instance seed from the configuration.
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn load(config: &PathBuf, seed: Option<u64>) -> Result<(Vec<u8>, config::ResolvedExperiment), CliError> {
    let bytes = std::fs::read(config)
        .map_err(|e| CliError::Config(format!("{}: {e}", config.display())))?;
    let text = std::str::from_utf8(&bytes)
        .map_err(|e| CliError::Config(format!("{}: {e}", config.display())))?;
    let parsed = ExperimentConfig::from_json(text)?;
    let resolved = parsed.resolve(seed)?;
    Ok((bytes, resolved))
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.cmd {
        Cmd::Solve { config, out, seed, strict } => {
            let (bytes, rx) = load(&config, seed)?;
            run::cmd_solve(&rx, &bytes, &out, strict)
        }
        Cmd::Verify { config, out, seed, strict } => {
            let (bytes, rx) = load(&config, seed)?;
            run::cmd_verify(&rx, &bytes, &out, strict)
        }
        Cmd::Bench { config, out, seed } => {
            let (_, rx) = load(&config, seed)?;
            run::cmd_bench(&rx, &out)
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Numerical(msg)) => {
            eprintln!("numerical failure: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Verification) => {
            eprintln!("verification failed; see reports");
            ExitCode::from(3)
        }
    }
}

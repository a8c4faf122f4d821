//! Command-line driver: benchmark generation, experiment execution,
//! convergence diagnostics, and evaluation, with reproducible seeded
//! configs and CSV/text outputs.
//!
//! Exit codes: 0 success, 1 validation error (flags, config files, input
//! shapes), 2 runtime error (computation or output failures).

mod diagnose;
mod evaluate;
mod generate;
mod run;
mod util;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Errors split by exit code.
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Runtime(String),
}

impl CliError {
    fn validation(e: impl std::fmt::Display) -> Self {
        Self::Validation(e.to_string())
    }

    fn runtime(e: impl std::fmt::Display) -> Self {
        Self::Runtime(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Parser)]
#[command(
    name = "bnsearch",
    about = "Stochastic structure learning for discrete Bayesian networks from incomplete data",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded layered benchmark: ground-truth network, masked
    /// train CSV, complete test CSV, truth assignment, and a manifest.
    Generate(generate::GenerateArgs),
    /// Run one or more search engines on a training set and write traces,
    /// final populations, best states, and a summary.
    Run(Box<run::RunArgs>),
    /// Gelman-Rubin convergence report over trace files.
    Diagnose(diagnose::DiagnoseArgs),
    /// Score a structure or network on train data and report holdout log
    /// loss.
    Evaluate(evaluate::EvaluateArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(args) => generate::run(&args),
        Command::Run(args) => run::run(&args),
        Command::Diagnose(args) => diagnose::run(&args),
        Command::Evaluate(args) => evaluate::run(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

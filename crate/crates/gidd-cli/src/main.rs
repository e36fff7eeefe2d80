//! Command-line entry point for the diffusion core and scaling pipeline.
//!
//! Every command is deterministic given `--seed` and its inputs; JSON
//! artifacts carry a schema version, input digests, and the seed.

mod commands;
mod io;
mod noise;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Exit codes: 0 success, 1 validation error, 2 numerical failure, 64 usage.
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Numeric(String),
}

impl CliError {
    pub fn validation(msg: impl Into<String>) -> Self {
        CliError::Validation(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        CliError::Numeric(msg.into())
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Numeric(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Numeric(m) => m,
        }
    }
}

impl From<gidd::GiddError> for CliError {
    fn from(e: gidd::GiddError) -> Self {
        use gidd::GiddError::*;
        match e {
            InvalidToken { .. } | InvalidVocab(_) | Dataset(_) | LambdaOutOfRange { .. } => {
                CliError::Validation(e.to_string())
            }
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<gidd_scaling::ScalingError> for CliError {
    fn from(e: gidd_scaling::ScalingError) -> Self {
        use gidd_scaling::ScalingError::*;
        match e {
            Validation(_) | Load(_) => CliError::Validation(e.to_string()),
            Degenerate(_) | NoConvergence(_) | Planner(_) => CliError::Numeric(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "gidd",
    about = "Hybrid masking/uniform discrete diffusion: likelihood bounds, samplers, toy training, and compute-optimal scaling laws.",
    version,
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand.
#[derive(Debug, clap::Args)]
pub struct Common {
    /// RNG seed; identical seeds and inputs give byte-identical outputs.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output file (stdout when omitted); relative paths resolve against
    /// $GIDD_OUT_DIR.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Also emit an SVG plot next to the output (commands that plot).
    #[arg(long, global = true)]
    pub plot: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the NELBO of a dataset under a denoiser.
    Elbo(commands::elbo::ElboArgs),
    /// Draw sequences by ancestral or adaptive sampling; writes a trace.
    Sample(commands::sample::SampleArgs),
    /// Train tabular denoisers across sizes and batches; writes run records.
    TrainToy(commands::train_toy::TrainToyArgs),
    /// Fit the compute-optimal scaling laws from run records.
    FitScaling(commands::fit_scaling::FitScalingArgs),
    /// Fit the optimal batch-size and learning-rate laws from run records.
    FitHparams(commands::fit_hparams::FitHparamsArgs),
    /// Fit the iso-loss hyperbola relating batch size and step count.
    FitHyperbola(commands::fit_hyperbola::FitHyperbolaArgs),
    /// Plan a training configuration for a FLOP budget from fitted laws.
    Plan(commands::plan::PlanArgs),
    /// Validate a run-record file and report violations.
    ValidateRuns(commands::validate::ValidateArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 64,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Elbo(args) => commands::elbo::run(args),
        Command::Sample(args) => commands::sample::run(args),
        Command::TrainToy(args) => commands::train_toy::run(args),
        Command::FitScaling(args) => commands::fit_scaling::run(args),
        Command::FitHparams(args) => commands::fit_hparams::run(args),
        Command::FitHyperbola(args) => commands::fit_hyperbola::run(args),
        Command::Plan(args) => commands::plan::run(args),
        Command::ValidateRuns(args) => commands::validate::run(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}

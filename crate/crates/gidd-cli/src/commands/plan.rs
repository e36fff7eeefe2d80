//! `gidd plan`: training configuration for a FLOP budget.

use std::path::PathBuf;

use clap::Args;

use gidd_scaling::planner::LawFixtures;
use gidd_scaling::{plan_run, CompletePRules, FlopMethod, PointSource};

use crate::io::{emit, Envelope};
use crate::{CliError, Common};

#[derive(Debug, Args)]
pub struct PlanArgs {
    #[command(flatten)]
    common: Common,
    /// Training budget in non-embedding FLOPs.
    #[arg(long)]
    flops: f64,
    /// Law-fixtures JSON file.
    #[arg(long, default_value = "fixtures/reference_laws.json")]
    laws: PathBuf,
    /// Noise type the laws were fitted on.
    #[arg(long, default_value = "uniform")]
    noise: String,
    /// FLOPs-per-token approximation: method1 or method2.
    #[arg(long, default_value = "method1")]
    method: String,
    /// Smoothing variant the laws were fitted on: raw or sq-fit.
    #[arg(long, default_value = "sq-fit")]
    smoothing: String,
    /// Reference sequence length for token/sequence conversion.
    #[arg(long, default_value_t = 2048)]
    seq_len: u32,
}

pub fn run(args: PlanArgs) -> Result<(), CliError> {
    let json = std::fs::read_to_string(&args.laws)
        .map_err(|e| CliError::validation(format!("{}: {e}", args.laws.display())))?;
    let fixtures = LawFixtures::from_json(&json)?;
    let method: FlopMethod = args.method.parse().map_err(CliError::from)?;
    let smoothing: PointSource = args.smoothing.parse().map_err(CliError::from)?;
    let laws = fixtures.planner_laws(&args.noise, method, smoothing)?;
    let plan = plan_run(
        args.flops,
        &laws,
        &CompletePRules::default(),
        &fixtures.beta2_policy(),
        &fixtures.shapes(),
        args.seq_len,
    )?;
    let envelope = Envelope::new("plan", args.common.seed, plan).with_input(&args.laws)?;
    emit(args.common.out.as_deref(), &envelope.to_json()?)
}

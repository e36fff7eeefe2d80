//! `gidd validate-runs`: lint a run-records file.

use std::collections::BTreeSet;
use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use gidd_scaling::RunRecord;

use crate::io::{emit, Envelope};
use crate::{CliError, Common};

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    common: Common,
    /// Run-records file (JSONL).
    #[arg(long)]
    runs: PathBuf,
}

#[derive(Serialize)]
struct ValidateResult {
    valid: bool,
    n_runs: usize,
    n_points: usize,
    models: Vec<String>,
    errors: Vec<String>,
}

pub fn run(args: ValidateArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.runs)
        .map_err(|e| CliError::validation(format!("{}: {e}", args.runs.display())))?;
    let mut errors = Vec::new();
    let mut runs: Vec<RunRecord> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let lineno = idx + 1;
        match serde_json::from_str::<RunRecord>(line) {
            Ok(run) => match run.validate() {
                Ok(()) => runs.push(run),
                Err(e) => errors.push(format!("line {lineno}: {e}")),
            },
            Err(e) => errors.push(format!("line {lineno}: {e}")),
        }
    }
    let mut seen = BTreeSet::new();
    for run in &runs {
        if !seen.insert(run.config_key()) {
            errors.push(format!(
                "duplicate configuration: model {}, B={}, lr={}, b={}",
                run.model.label(),
                run.batch_size_seqs,
                run.lr_base,
                run.noise_b
            ));
        }
    }
    let models: BTreeSet<String> = runs.iter().map(|r| r.model.label()).collect();
    let result = ValidateResult {
        valid: errors.is_empty(),
        n_runs: runs.len(),
        n_points: runs.iter().map(|r| r.points.len()).sum(),
        models: models.into_iter().collect(),
        errors: errors.clone(),
    };
    let envelope =
        Envelope::new("validate-runs", args.common.seed, result).with_input(&args.runs)?;
    emit(args.common.out.as_deref(), &envelope.to_json()?)?;
    if errors.is_empty() {
        Ok(())
    } else {
        Err(CliError::validation(format!(
            "{} violation(s) found",
            errors.len()
        )))
    }
}

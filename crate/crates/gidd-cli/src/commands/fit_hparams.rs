//! `gidd fit-hparams`: optimal batch-size and learning-rate laws.

use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use gidd_scaling::{fit_batch_law, fit_lr_law, LogCurve, PowerLawFit, RunRecord};

use crate::commands::fit_scaling::load_runs;
use crate::io::{emit, parse_f64_list, write_atomic, Envelope};
use crate::plot::{Plot, Series};
use crate::{CliError, Common};

#[derive(Debug, Args)]
pub struct FitHparamsArgs {
    #[command(flatten)]
    common: Common,
    /// Run-records file.
    #[arg(long)]
    runs: PathBuf,
    #[arg(long, default_value = "jsonl")]
    format: String,
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Explicit token budgets, comma-separated.
    #[arg(long)]
    budgets: Option<String>,
    /// Number of auto-selected token budgets.
    #[arg(long, default_value_t = 6)]
    n_budgets: usize,
    /// Interpolation window.
    #[arg(long, default_value_t = 5)]
    window: usize,
}

#[derive(Serialize)]
struct OptimalAtBudget {
    tokens: f64,
    batch_tokens: f64,
    batch_seqs: u64,
    lr_base: f64,
    loss: f64,
}

#[derive(Serialize)]
struct FitHparamsResult {
    batch_law: PowerLawFit,
    lr_law: PowerLawFit,
    points: Vec<OptimalAtBudget>,
}

/// Token budgets covered by every configuration.
fn auto_budgets(runs: &[RunRecord], n: usize) -> Result<Vec<f64>, CliError> {
    let lo = runs
        .iter()
        .map(|r| r.points.first().unwrap().tokens as f64)
        .fold(0.0, f64::max);
    let hi = runs
        .iter()
        .map(|r| r.points.last().unwrap().tokens as f64)
        .fold(f64::INFINITY, f64::min);
    if !(hi > lo * 1.2) {
        return Err(CliError::numeric(format!(
            "runs share too little token coverage ([{lo:.3e}, {hi:.3e}]); pass --budgets"
        )));
    }
    let (lo, hi) = (lo * 1.02, hi / 1.02);
    Ok((0..n)
        .map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64))
        .collect())
}

pub fn run(args: FitHparamsArgs) -> Result<(), CliError> {
    let runs = load_runs(&args.runs, &args.format, args.manifest.as_deref())?;
    if runs.is_empty() {
        return Err(CliError::validation("no runs in input"));
    }
    let budgets = match &args.budgets {
        Some(b) => parse_f64_list(b)?,
        None => auto_budgets(&runs, args.n_budgets)?,
    };
    // per budget: the configuration with the lowest interpolated loss at
    // that token count
    let mut points = Vec::new();
    for &d in &budgets {
        let mut best: Option<OptimalAtBudget> = None;
        for run in &runs {
            let xs: Vec<f64> = run.points.iter().map(|p| p.tokens as f64).collect();
            let ys: Vec<f64> = run.points.iter().map(|p| p.loss).collect();
            let Ok(curve) = LogCurve::new(&xs, &ys) else {
                continue;
            };
            if !curve.covers(d) {
                continue;
            }
            let loss = curve.value_at(d, args.window)?;
            let candidate = OptimalAtBudget {
                tokens: d,
                batch_tokens: (run.batch_size_seqs * run.model.seq_len as u64) as f64,
                batch_seqs: run.batch_size_seqs,
                lr_base: run.lr_base,
                loss,
            };
            if best.as_ref().map_or(true, |b| candidate.loss < b.loss) {
                best = Some(candidate);
            }
        }
        if let Some(b) = best {
            points.push(b);
        }
    }
    if points.len() < 3 {
        return Err(CliError::numeric(format!(
            "only {} budgets had coverage; need at least 3",
            points.len()
        )));
    }
    let batch_pairs: Vec<(f64, f64)> = points.iter().map(|p| (p.tokens, p.batch_tokens)).collect();
    let lr_pairs: Vec<(f64, f64)> = points.iter().map(|p| (p.batch_tokens, p.lr_base)).collect();
    let batch_law = fit_batch_law(&batch_pairs)?;
    let lr_law = fit_lr_law(&lr_pairs)?;

    if args.common.plot {
        let stem = args
            .common
            .out
            .clone()
            .unwrap_or_else(|| PathBuf::from("fit-hparams.json"));
        for (suffix, title, xlabel, ylabel, pairs, law) in [
            (
                "batch",
                "optimal batch size over training tokens",
                "training tokens",
                "optimal batch (tokens)",
                &batch_pairs,
                &batch_law,
            ),
            (
                "lr",
                "optimal base LR over optimal batch size",
                "batch size (tokens)",
                "optimal base learning rate",
                &lr_pairs,
                &lr_law,
            ),
        ] {
            let fitted: Vec<(f64, f64)> =
                pairs.iter().map(|&(x, _)| (x, law.evaluate(x))).collect();
            let plot = Plot {
                title: format!("{title}: exponent {:.4}", law.alpha),
                x_label: xlabel.into(),
                y_label: ylabel.into(),
                log_x: true,
                log_y: true,
                series: vec![
                    Series {
                        name: "observed optima".into(),
                        points: pairs.clone(),
                        line: false,
                    },
                    Series {
                        name: "fitted law".into(),
                        points: fitted,
                        line: true,
                    },
                ],
            };
            write_atomic(
                &stem.with_extension(format!("{suffix}.svg")),
                plot.render().as_bytes(),
            )?;
        }
    }

    let result = FitHparamsResult {
        batch_law,
        lr_law,
        points,
    };
    let envelope =
        Envelope::new("fit-hparams", args.common.seed, result).with_input(&args.runs)?;
    emit(args.common.out.as_deref(), &envelope.to_json()?)
}

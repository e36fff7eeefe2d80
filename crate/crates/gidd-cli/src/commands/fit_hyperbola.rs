//! `gidd fit-hyperbola`: iso-loss law relating batch size and step count.

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use gidd_scaling::{fit_hyperbola, token_optimal, BatchUnit, HyperbolaFit, LogCurve, TokenOptimal};

use crate::commands::fit_scaling::load_runs;
use crate::io::{emit, write_atomic, Envelope};
use crate::plot::{Plot, Series};
use crate::{CliError, Common};

#[derive(Debug, Args)]
pub struct FitHyperbolaArgs {
    #[command(flatten)]
    common: Common,
    /// Run-records file; per batch size, the step count at which the target
    /// loss is first crossed (best learning rate wins).
    #[arg(long)]
    runs: Option<PathBuf>,
    #[arg(long, default_value = "jsonl")]
    format: String,
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Direct (batch, steps) points: CSV lines `b,s`.
    #[arg(long)]
    points: Option<PathBuf>,
    /// Target loss defining the iso-loss set (required with --runs).
    #[arg(long)]
    target_loss: Option<f64>,
    /// Batch unit: sequences or tokens.
    #[arg(long, default_value = "sequences")]
    unit: String,
    /// Interpolation window for loss crossings.
    #[arg(long, default_value_t = 5)]
    window: usize,
}

#[derive(Serialize)]
struct FitHyperbolaResult {
    fit: HyperbolaFit,
    token_optimal: TokenOptimal,
    points: Vec<(f64, f64)>,
}

pub fn run(args: FitHyperbolaArgs) -> Result<(), CliError> {
    let unit = match args.unit.as_str() {
        "sequences" | "seqs" => BatchUnit::Sequences,
        "tokens" => BatchUnit::Tokens,
        other => {
            return Err(CliError::validation(format!(
                "unknown unit {other:?} (expected sequences or tokens)"
            )))
        }
    };
    let (points, target_loss, input_path) = match (&args.runs, &args.points) {
        (Some(runs_path), None) => {
            let target = args.target_loss.ok_or_else(|| {
                CliError::validation("--target-loss is required with --runs".to_string())
            })?;
            let runs = load_runs(runs_path, &args.format, args.manifest.as_deref())?;
            // per batch size, pick the best (earliest) crossing over lrs
            let mut best: BTreeMap<u64, f64> = BTreeMap::new();
            for run in &runs {
                let lo = run.points.iter().map(|p| p.loss).fold(f64::INFINITY, f64::min);
                let hi = run.points.iter().map(|p| p.loss).fold(0.0, f64::max);
                if target < lo || target > hi {
                    continue; // this configuration never reaches the target
                }
                let xs: Vec<f64> = run.points.iter().map(|p| p.step as f64).collect();
                let ys: Vec<f64> = run.points.iter().map(|p| p.loss).collect();
                let Ok(curve) = LogCurve::new(&xs, &ys) else {
                    continue;
                };
                let Ok(step) = curve.crossing_at(target, args.window) else {
                    continue;
                };
                best.entry(run.batch_size_seqs)
                    .and_modify(|s| *s = s.min(step))
                    .or_insert(step);
            }
            let pts: Vec<(f64, f64)> = best
                .into_iter()
                .map(|(b, s)| {
                    let b = b as f64;
                    match unit {
                        BatchUnit::Sequences => (b, s),
                        BatchUnit::Tokens => {
                            let n = runs[0].model.seq_len as f64;
                            (b * n, s)
                        }
                    }
                })
                .collect();
            (pts, target, runs_path.clone())
        }
        (None, Some(points_path)) => {
            let text = std::fs::read_to_string(points_path)
                .map_err(|e| CliError::validation(format!("{}: {e}", points_path.display())))?;
            let mut pts = Vec::new();
            for (i, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') || (i == 0 && line.starts_with('b')) {
                    continue;
                }
                let mut it = line.split(',');
                let parse = |s: Option<&str>| -> Result<f64, CliError> {
                    s.and_then(|v| v.trim().parse().ok()).ok_or_else(|| {
                        CliError::validation(format!("line {}: expected `b,s`", i + 1))
                    })
                };
                let b = parse(it.next())?;
                let s = parse(it.next())?;
                pts.push((b, s));
            }
            (pts, args.target_loss.unwrap_or(f64::NAN), points_path.clone())
        }
        _ => {
            return Err(CliError::validation(
                "pass exactly one of --runs or --points",
            ))
        }
    };
    if points.len() < 4 {
        return Err(CliError::numeric(format!(
            "only {} iso-loss points available; need at least 4",
            points.len()
        )));
    }
    let fit = fit_hyperbola(&points, unit, target_loss)?;
    let optimal = token_optimal(&fit);

    if args.common.plot {
        let stem = args
            .common
            .out
            .clone()
            .unwrap_or_else(|| PathBuf::from("fit-hyperbola.json"));
        let mut curve_pts = Vec::new();
        let b_hi = points.iter().map(|p| p.0).fold(0.0, f64::max) * 1.2;
        for i in 0..200 {
            let b = fit.b_min * 1.001 * (b_hi / (fit.b_min * 1.001)).powf(i as f64 / 199.0);
            if let Ok(s) = fit.steps_at(b) {
                curve_pts.push((b, s));
            }
        }
        let plot = Plot {
            title: format!(
                "iso-loss hyperbola: B_min={:.3}, S_min={:.3}, alpha={:.3}",
                fit.b_min, fit.s_min, fit.stiffness
            ),
            x_label: "batch size".into(),
            y_label: "steps to target loss".into(),
            log_x: true,
            log_y: true,
            series: vec![
                Series {
                    name: "observed".into(),
                    points: points.clone(),
                    line: false,
                },
                Series {
                    name: "fit".into(),
                    points: curve_pts,
                    line: true,
                },
                Series {
                    name: "token-optimal".into(),
                    points: vec![(optimal.b_star, optimal.s_star)],
                    line: false,
                },
            ],
        };
        write_atomic(&stem.with_extension("svg"), plot.render().as_bytes())?;
    }

    let result = FitHyperbolaResult {
        fit,
        token_optimal: optimal,
        points,
    };
    let envelope =
        Envelope::new("fit-hyperbola", args.common.seed, result).with_input(&input_path)?;
    emit(args.common.out.as_deref(), &envelope.to_json()?)
}

//! `gidd fit-scaling`: compute-optimal laws from run records.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::Serialize;

use gidd_scaling::powerlaw::ConfidenceLevel;
use gidd_scaling::{
    compute_optimal_laws, flops_per_token, power_law_with_ci, FlopMethod, PointSource, RunRecord,
    ScalingLaws,
};

use crate::io::{emit, parse_f64_list, write_atomic, Envelope};
use crate::plot::{Plot, Series};
use crate::{CliError, Common};

#[derive(Debug, Args)]
pub struct FitScalingArgs {
    #[command(flatten)]
    common: Common,
    /// Run-records file.
    #[arg(long)]
    runs: PathBuf,
    /// Input format: jsonl or csv.
    #[arg(long, default_value = "jsonl")]
    format: String,
    /// Manifest sidecar (csv format only).
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Explicit compute targets (FLOPs), comma-separated.
    #[arg(long)]
    targets: Option<String>,
    /// Number of auto-selected targets when --targets is omitted.
    #[arg(long, default_value_t = 8)]
    n_targets: usize,
    /// FLOPs-per-token approximation: method1 or method2.
    #[arg(long, default_value = "method1")]
    method: String,
    /// Iso-FLOP smoothing: raw or sq-fit.
    #[arg(long, default_value = "sq-fit")]
    smoothing: String,
    /// Local interpolation window (points).
    #[arg(long, default_value_t = 5)]
    window: usize,
    /// Bootstrap resamples for law confidence intervals (0 disables).
    #[arg(long, default_value_t = 0)]
    bootstrap: usize,
    /// Bootstrap confidence level: 2sigma, 95, or 99.
    #[arg(long, default_value = "2sigma")]
    level: String,
}

#[derive(Serialize)]
struct FitScalingResult {
    method: String,
    smoothing: String,
    targets: Vec<f64>,
    laws: ScalingLaws,
}

pub fn load_runs(
    path: &Path,
    format: &str,
    manifest: Option<&Path>,
) -> Result<Vec<RunRecord>, CliError> {
    match format {
        "jsonl" => Ok(gidd_scaling::load_runs_jsonl(path)?),
        "csv" => {
            let manifest = manifest.ok_or_else(|| {
                CliError::validation("csv format requires --manifest".to_string())
            })?;
            Ok(gidd_scaling::load_runs_csv(path, manifest)?)
        }
        other => Err(CliError::validation(format!(
            "unknown format {other:?} (expected jsonl or csv)"
        ))),
    }
}

pub fn parse_level(s: &str) -> Result<ConfidenceLevel, CliError> {
    match s {
        "2sigma" => Ok(ConfidenceLevel::TwoSigma),
        "95" => Ok(ConfidenceLevel::Ci95),
        "99" => Ok(ConfidenceLevel::Ci99),
        other => Err(CliError::validation(format!(
            "unknown confidence level {other:?} (expected 2sigma, 95, or 99)"
        ))),
    }
}

/// Log-spaced compute targets over the region where at least three model
/// sizes have coverage (enough for an iso-FLOP profile).
pub fn auto_targets(
    runs: &[RunRecord],
    method: FlopMethod,
    n: usize,
) -> Result<Vec<f64>, CliError> {
    if n < 4 {
        return Err(CliError::validation("need at least 4 targets"));
    }
    use std::collections::BTreeMap;
    let mut per_model: BTreeMap<_, (f64, f64)> = BTreeMap::new();
    for run in runs {
        let m = flops_per_token(&run.model, method);
        let lo = m * run.points.first().unwrap().tokens as f64;
        let hi = m * run.points.last().unwrap().tokens as f64;
        per_model
            .entry(run.model)
            .and_modify(|(l, h)| {
                *l = l.min(lo);
                *h = h.max(hi);
            })
            .or_insert((lo, hi));
    }
    let global_lo = per_model.values().map(|&(l, _)| l).fold(f64::INFINITY, f64::min);
    let global_hi = per_model.values().map(|&(_, h)| h).fold(0.0, f64::max);
    // demand a healthy profile around each target: enough covering models
    // that the optimum is unlikely to sit at the edge of the covered set
    let needed = per_model.len().min(5).max(3);
    let covered = |c: f64| {
        per_model
            .values()
            .filter(|&&(l, h)| c >= l * 1.02 && c <= h / 1.02)
            .count()
            >= needed
    };
    let candidates = 512;
    let kept: Vec<f64> = (0..candidates)
        .map(|i| global_lo * (global_hi / global_lo).powf(i as f64 / (candidates - 1) as f64))
        .filter(|&c| covered(c))
        .collect();
    if kept.len() < n || kept.last().unwrap() / kept[0] < 1.5 {
        return Err(CliError::numeric(
            "too few model sizes share enough compute coverage for automatic \
             targets; pass --targets explicitly"
                .to_string(),
        ));
    }
    // trim the outermost 15% of the covered log-range on each side
    let (k_lo, k_hi) = (kept[0], *kept.last().unwrap());
    let span = (k_hi / k_lo).ln();
    let lo = k_lo * (0.15 * span).exp();
    let hi = k_hi / (0.15 * span).exp();
    Ok((0..n)
        .map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64))
        .collect())
}

pub fn run(args: FitScalingArgs) -> Result<(), CliError> {
    let runs = load_runs(&args.runs, &args.format, args.manifest.as_deref())?;
    if runs.is_empty() {
        return Err(CliError::validation("no runs in input"));
    }
    let method: FlopMethod = args.method.parse().map_err(CliError::from)?;
    let smoothing: PointSource = args.smoothing.parse().map_err(CliError::from)?;
    let targets = match &args.targets {
        Some(t) => parse_f64_list(t)?,
        None => auto_targets(&runs, method, args.n_targets)?,
    };
    let mut laws = compute_optimal_laws(&runs, &targets, method, smoothing, args.window)?;

    if args.bootstrap > 0 {
        let level = parse_level(&args.level)?;
        let cs: Vec<f64> = laws.optima.iter().map(|o| o.c).collect();
        for (law, ys) in [
            (&mut laws.m_law, laws.optima.iter().map(|o| o.m_star).collect::<Vec<_>>()),
            (&mut laws.d_law, laws.optima.iter().map(|o| o.d_star).collect()),
            (&mut laws.p_law, laws.optima.iter().map(|o| o.p_star).collect()),
            (&mut laws.l_law, laws.optima.iter().map(|o| o.loss_star).collect()),
        ] {
            let with_ci =
                power_law_with_ci(&cs, &ys, false, args.bootstrap, level, args.common.seed)?;
            law.ci = with_ci.ci;
        }
    }

    if args.common.plot {
        let stem = args
            .common
            .out
            .clone()
            .unwrap_or_else(|| PathBuf::from("fit-scaling.json"));
        write_plots(&laws, &runs, method, &stem)?;
    }

    let result = FitScalingResult {
        method: method.name().to_string(),
        smoothing: smoothing.name().to_string(),
        targets,
        laws,
    };
    let envelope =
        Envelope::new("fit-scaling", args.common.seed, result).with_input(&args.runs)?;
    emit(args.common.out.as_deref(), &envelope.to_json()?)
}

fn write_plots(
    laws: &ScalingLaws,
    runs: &[RunRecord],
    method: FlopMethod,
    stem: &Path,
) -> Result<(), CliError> {
    let cs: Vec<f64> = laws.optima.iter().map(|o| o.c).collect();
    let panels: [(&str, &str, Vec<f64>, &gidd_scaling::PowerLawFit); 3] = [
        ("m", "optimal FLOPs per token", laws.optima.iter().map(|o| o.m_star).collect(), &laws.m_law),
        ("d", "optimal tokens", laws.optima.iter().map(|o| o.d_star).collect(), &laws.d_law),
        ("loss", "optimal loss (nats/token)", laws.optima.iter().map(|o| o.loss_star).collect(), &laws.l_law),
    ];
    for (suffix, label, ys, law) in panels {
        let fitted: Vec<(f64, f64)> = cs.iter().map(|&c| (c, law.evaluate(c))).collect();
        let plot = Plot {
            title: format!(
                "{label}: A={:.4e}, alpha={:.4}",
                law.a, law.alpha
            ),
            x_label: "training compute (FLOPs)".into(),
            y_label: label.into(),
            log_x: true,
            log_y: true,
            series: vec![
                Series {
                    name: "iso-FLOP optima".into(),
                    points: cs.iter().copied().zip(ys).collect(),
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
    // iso-FLOP profiles: loss over model size for each target
    let mut series = Vec::new();
    for &c in &cs {
        let extraction = gidd_scaling::extract_isoflop(runs, &[c], method, 5)?;
        let mut pts: Vec<(f64, f64)> = extraction
            .points
            .iter()
            .map(|p| (p.model_m, p.loss))
            .collect();
        pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        series.push(Series {
            name: format!("C={c:.2e}"),
            points: pts,
            line: true,
        });
    }
    let plot = Plot {
        title: "iso-FLOP profiles".into(),
        x_label: "FLOPs per token".into(),
        y_label: "loss (nats/token)".into(),
        log_x: true,
        log_y: false,
        series,
    };
    write_atomic(&stem.with_extension("profiles.svg"), plot.render().as_bytes())
}

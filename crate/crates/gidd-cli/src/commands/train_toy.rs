//! `gidd train-toy`: tabular-denoiser sweeps emitting run records.

use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use gidd::denoiser::{train_tabular, Checkpoint, OptimizerConfig, TrainingOptions};
use gidd::NoiseProcess;
use gidd_scaling::{ModelSpec, RunPoint, RunRecord};

use crate::commands::derive_seed;
use crate::io::{emit, load_dataset, parse_f64_list, parse_usize_list, write_atomic, Envelope};
use crate::{CliError, Common};

#[derive(Debug, Args)]
pub struct TrainToyArgs {
    #[command(flatten)]
    common: Common,
    /// Dataset JSON file.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    noise: Option<String>,
    #[arg(long)]
    noise_b: Option<f64>,
    /// Log-SNR bucket counts (model sizes), comma-separated.
    #[arg(long, default_value = "2,4,8")]
    buckets: String,
    /// Batch sizes in sequences, comma-separated.
    #[arg(long, default_value = "8,16,32,64")]
    batches: String,
    /// Base learning rates, comma-separated.
    #[arg(long, default_value = "0.1")]
    lrs: String,
    /// Optimizer steps per run.
    #[arg(long, default_value_t = 1500)]
    steps: usize,
    /// Warmup steps.
    #[arg(long, default_value_t = 100)]
    warmup: usize,
    /// Record the evaluation NELBO every this many steps.
    #[arg(long, default_value_t = 50)]
    eval_every: usize,
    /// Quadrature grid of the evaluation NELBO.
    #[arg(long, default_value_t = 64)]
    eval_grid: usize,
    /// Fraction of samples with independent per-token noise levels.
    #[arg(long, default_value_t = 0.5)]
    forcing_fraction: f64,
    /// Fraction of samples with a noise-free prompt prefix.
    #[arg(long, default_value_t = 0.0)]
    prompt_fraction: f64,
    /// Maximum empty-token augmentation fraction.
    #[arg(long, default_value_t = 0.0)]
    empty_fraction_max: f64,
    /// Write the final model of the largest configuration here.
    #[arg(long)]
    save_checkpoint: Option<PathBuf>,
    /// Run-records output file (JSONL).
    #[arg(long, default_value = "runs.jsonl")]
    runs_out: PathBuf,
}

#[derive(Serialize)]
struct TrainSummary {
    noise: String,
    shift_b: f64,
    n_runs: usize,
    runs_out: String,
    final_nelbos: Vec<RunSummary>,
}

#[derive(Serialize)]
struct RunSummary {
    buckets: usize,
    params: usize,
    batch_seqs: u64,
    lr: f64,
    final_nelbo: f64,
    final_surrogate: f64,
}

pub fn run(args: TrainToyArgs) -> Result<(), CliError> {
    let (vocab, data) = load_dataset(&args.data)?;
    let (noise_label, schedule) = crate::noise::resolve(args.noise.as_deref(), args.noise_b)?;
    let process = NoiseProcess::new(schedule, vocab);
    let buckets = parse_usize_list(&args.buckets)?;
    let batches = parse_usize_list(&args.batches)?;
    let lrs = parse_f64_list(&args.lrs)?;
    if buckets.is_empty() || batches.is_empty() || lrs.is_empty() {
        return Err(CliError::validation("need at least one size, batch, and lr"));
    }
    if args.eval_every == 0 {
        return Err(CliError::validation("--eval-every must be positive"));
    }

    let mut records = Vec::new();
    let mut summaries = Vec::new();
    let mut last_checkpoint = None;
    for (bi, &n_buckets) in buckets.iter().enumerate() {
        for (bj, &batch) in batches.iter().enumerate() {
            for (bk, &lr) in lrs.iter().enumerate() {
                let beta2 = if batch >= 256 { 0.98 } else { 0.99 };
                let cfg = OptimizerConfig {
                    beta1: 0.9,
                    beta2,
                    eps: 1e-8,
                    learning_rate: lr,
                    batch_size: batch,
                    warmup_steps: args.warmup,
                };
                let run_index = ((bi * batches.len()) + bj) * lrs.len() + bk;
                let opts = TrainingOptions {
                    n_steps: args.steps,
                    rng_seed: derive_seed(args.common.seed, run_index as u64),
                    forcing_fraction: args.forcing_fraction,
                    prompt_fraction: args.prompt_fraction,
                    empty_fraction_max: args.empty_fraction_max,
                    eval_every: args.eval_every,
                    eval_grid: args.eval_grid,
                    log_every: 0,
                };
                let (model, curve) = train_tabular(&data, &process, n_buckets, &cfg, &opts)?;
                let spec = ModelSpec {
                    layers: 1,
                    hidden: n_buckets as u32,
                    heads: 1,
                    seq_len: data.seq_len() as u32,
                    params_nonemb: model.param_count() as u64,
                    vocab_size: vocab.size() as u64,
                };
                let eval_points: Vec<_> =
                    curve.points.iter().filter(|p| p.nelbo.is_some()).collect();
                let points: Vec<RunPoint> = eval_points
                    .iter()
                    .map(|p| RunPoint {
                        step: p.step as u64,
                        tokens: p.tokens,
                        loss: p.nelbo.unwrap(),
                    })
                    .collect();
                let mut record = RunRecord::new(spec, schedule.b(), batch as u64, lr, points);
                record.surrogate = Some(eval_points.iter().map(|p| p.surrogate).collect());
                record.validate().map_err(CliError::from)?;
                summaries.push(RunSummary {
                    buckets: n_buckets,
                    params: model.param_count(),
                    batch_seqs: batch as u64,
                    lr,
                    final_nelbo: record.points.last().map(|p| p.loss).unwrap_or(f64::NAN),
                    final_surrogate: eval_points.last().map(|p| p.surrogate).unwrap_or(f64::NAN),
                });
                records.push(record);
                last_checkpoint = Some(Checkpoint::new(model, cfg));
            }
        }
    }
    gidd_scaling::validate_runs(&records).map_err(CliError::from)?;

    let mut jsonl = Vec::new();
    for r in &records {
        serde_json::to_writer(&mut jsonl, r).map_err(|e| CliError::numeric(e.to_string()))?;
        jsonl.push(b'\n');
    }
    write_atomic(&args.runs_out, &jsonl)?;

    if let Some(path) = &args.save_checkpoint {
        let ckpt = last_checkpoint.expect("at least one run");
        let mut text = serde_json::to_string_pretty(&ckpt)
            .map_err(|e| CliError::numeric(e.to_string()))?;
        text.push('\n');
        write_atomic(path, text.as_bytes())?;
    }

    let summary = TrainSummary {
        noise: noise_label,
        shift_b: schedule.b(),
        n_runs: records.len(),
        runs_out: args.runs_out.display().to_string(),
        final_nelbos: summaries,
    };
    let envelope = Envelope::new("train-toy", args.common.seed, summary).with_input(&args.data)?;
    emit(args.common.out.as_deref(), &envelope.to_json()?)
}

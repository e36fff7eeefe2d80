//! `gidd elbo`: NELBO of a dataset under a chosen denoiser.

use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use gidd::elbo::{nats_to_bpb, nelbo_monte_carlo, nelbo_quadrature};
use gidd::{LambdaDistribution, LambdaKind, NoiseProcess};

use crate::commands::{build_denoiser, derive_seed};
use crate::io::{emit, load_dataset, Envelope};
use crate::{CliError, Common};

#[derive(Debug, Args)]
pub struct ElboArgs {
    #[command(flatten)]
    common: Common,
    /// Dataset JSON file.
    #[arg(long)]
    data: PathBuf,
    /// Noise preset: masked, low-uniform, balanced, high-uniform, uniform.
    #[arg(long)]
    noise: Option<String>,
    /// Explicit mixing shift b (alternative to --noise).
    #[arg(long)]
    noise_b: Option<f64>,
    /// Denoiser: oracle, uniform, marginals, or a checkpoint path.
    #[arg(long, default_value = "oracle")]
    denoiser: String,
    /// Estimator: quadrature or monte-carlo.
    #[arg(long, default_value = "quadrature")]
    estimator: String,
    /// Monte Carlo sample count.
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    /// Quadrature grid resolution.
    #[arg(long, default_value_t = 512)]
    grid: usize,
    /// Log-SNR density for Monte Carlo: linear or uniform.
    #[arg(long, default_value = "linear")]
    lambda_dist: String,
}

#[derive(Serialize)]
struct SequenceEstimate {
    sequence: Vec<usize>,
    weight: f64,
    nats_per_token: f64,
    std_error: f64,
}

#[derive(Serialize)]
struct ElboResult {
    noise: String,
    shift_b: f64,
    denoiser: String,
    estimator: String,
    value_nats_per_token: f64,
    std_error: f64,
    value_bpb: f64,
    per_sequence: Vec<SequenceEstimate>,
}

pub fn run(args: ElboArgs) -> Result<(), CliError> {
    let (vocab, data) = load_dataset(&args.data)?;
    let (noise_label, schedule) = crate::noise::resolve(args.noise.as_deref(), args.noise_b)?;
    let process = NoiseProcess::new(schedule, vocab);
    let denoiser = build_denoiser(&args.denoiser, vocab, &data, &process)?;

    let mut per_sequence = Vec::new();
    let mut value = 0.0;
    let mut var = 0.0;
    match args.estimator.as_str() {
        "quadrature" => {
            for (seq, w) in data.iter() {
                let est = nelbo_quadrature(seq, denoiser.as_ref(), &process, args.grid)?;
                value += w * est.value;
                per_sequence.push(SequenceEstimate {
                    sequence: seq.tokens().to_vec(),
                    weight: w,
                    nats_per_token: est.value,
                    std_error: 0.0,
                });
            }
        }
        "monte-carlo" => {
            let kind = match args.lambda_dist.as_str() {
                "linear" => LambdaKind::LinearSchedule,
                "uniform" => LambdaKind::UniformOnRange,
                other => {
                    return Err(CliError::validation(format!(
                        "unknown lambda distribution {other:?} (expected linear or uniform)"
                    )))
                }
            };
            let p_lambda = LambdaDistribution::for_process(kind, &process);
            for (k, (seq, w)) in data.iter().enumerate() {
                let est = nelbo_monte_carlo(
                    seq,
                    denoiser.as_ref(),
                    &process,
                    &p_lambda,
                    args.samples,
                    derive_seed(args.common.seed, k as u64),
                )?;
                value += w * est.value;
                var += (w * est.std_error).powi(2);
                per_sequence.push(SequenceEstimate {
                    sequence: seq.tokens().to_vec(),
                    weight: w,
                    nats_per_token: est.value,
                    std_error: est.std_error,
                });
            }
        }
        other => {
            return Err(CliError::validation(format!(
                "unknown estimator {other:?} (expected quadrature or monte-carlo)"
            )))
        }
    }
    let result = ElboResult {
        noise: noise_label,
        shift_b: schedule.b(),
        denoiser: args.denoiser.clone(),
        estimator: args.estimator.clone(),
        value_nats_per_token: value,
        std_error: var.sqrt(),
        value_bpb: nats_to_bpb(value.max(0.0))?,
        per_sequence,
    };
    let envelope = Envelope::new("elbo", args.common.seed, result).with_input(&args.data)?;
    emit(args.common.out.as_deref(), &envelope.to_json()?)
}

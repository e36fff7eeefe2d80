//! `gidd sample`: ancestral or confidence-based adaptive generation.

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use gidd::sampler::AdaptiveOptions;
use gidd::{adaptive_sample, ancestral_sample, DenoiseSchedule, NoiseProcess};

use crate::commands::{build_denoiser, derive_seed};
use crate::io::{emit, load_dataset, parse_usize_list, Envelope};
use crate::{CliError, Common};

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[command(flatten)]
    common: Common,
    /// Dataset JSON file (vocabulary and oracle substrate).
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    noise: Option<String>,
    #[arg(long)]
    noise_b: Option<f64>,
    /// Sampling mode: ancestral or adaptive.
    #[arg(long, default_value = "ancestral")]
    mode: String,
    /// Denoising steps T.
    #[arg(long, default_value_t = 64)]
    steps: usize,
    /// Sequence length (defaults to the dataset's length).
    #[arg(long)]
    len: Option<usize>,
    /// Denoiser: oracle, uniform, marginals, or a checkpoint path.
    #[arg(long, default_value = "oracle")]
    denoiser: String,
    /// Prompt prefix tokens, comma-separated.
    #[arg(long)]
    prompt: Option<String>,
    /// Number of independent trajectories.
    #[arg(long, default_value_t = 1)]
    samples: usize,
    /// Level spacing for ancestral sampling: lambda (uniform in log-SNR) or
    /// time (uniform in signal strength).
    #[arg(long, default_value = "lambda")]
    schedule: String,
    /// Positions committed per adaptive step.
    #[arg(long, default_value_t = 1)]
    top_k: usize,
    /// Allow adaptive sampling to revise already-committed positions.
    #[arg(long)]
    allow_reselect: bool,
}

#[derive(Serialize)]
struct TraceHeader {
    mode: String,
    noise: String,
    shift_b: f64,
    steps: usize,
    seq_len: usize,
    samples: usize,
}

pub fn run(args: SampleArgs) -> Result<(), CliError> {
    let (vocab, data) = load_dataset(&args.data)?;
    let (noise_label, schedule) = crate::noise::resolve(args.noise.as_deref(), args.noise_b)?;
    let process = NoiseProcess::new(schedule, vocab);
    let denoiser = build_denoiser(&args.denoiser, vocab, &data, &process)?;
    let seq_len = args.len.unwrap_or_else(|| data.seq_len());
    let prompt: Option<Vec<usize>> = match &args.prompt {
        Some(s) => Some(parse_usize_list(s)?),
        None => None,
    };
    let prompt_ref = prompt.as_deref();

    let header = Envelope::new(
        "sample",
        args.common.seed,
        TraceHeader {
            mode: args.mode.clone(),
            noise: noise_label,
            shift_b: schedule.b(),
            steps: args.steps,
            seq_len,
            samples: args.samples,
        },
    )
    .with_input(&args.data)?;

    // JSONL: one header line, then one state per line
    let mut out = serde_json::to_string(&header)
        .map_err(|e| CliError::numeric(format!("serialize: {e}")))?;
    out.push('\n');
    for t in 0..args.samples {
        let seed = derive_seed(args.common.seed, t as u64);
        let trace = match args.mode.as_str() {
            "ancestral" => {
                let levels = match args.schedule.as_str() {
                    "lambda" => DenoiseSchedule::uniform_lambda(
                        process.schedule().lambda_min(),
                        process.schedule().lambda_max(),
                        args.steps,
                    ),
                    "time" => DenoiseSchedule::uniform_time(
                        process.schedule().lambda_min(),
                        process.schedule().lambda_max(),
                        args.steps,
                    ),
                    other => {
                        return Err(CliError::validation(format!(
                            "unknown schedule {other:?} (expected lambda or time)"
                        )))
                    }
                }?;
                ancestral_sample(denoiser.as_ref(), &process, &levels, seq_len, prompt_ref, seed)?
            }
            "adaptive" => {
                let opts = AdaptiveOptions {
                    top_k: args.top_k,
                    allow_reselect: args.allow_reselect,
                };
                adaptive_sample(
                    denoiser.as_ref(),
                    &process,
                    args.steps,
                    seq_len,
                    prompt_ref,
                    &opts,
                    seed,
                )?
            }
            other => {
                return Err(CliError::validation(format!(
                    "unknown mode {other:?} (expected ancestral or adaptive)"
                )))
            }
        };
        for (j, state) in trace.states.iter().enumerate() {
            let _ = writeln!(
                out,
                "{{\"trace\":{t},\"step\":{j},\"state\":{}}}",
                serde_json::to_string(state.tokens()).unwrap()
            );
        }
    }
    emit(args.common.out.as_deref(), &out)
}

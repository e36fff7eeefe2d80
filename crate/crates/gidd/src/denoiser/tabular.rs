//! Trainable tabular denoiser and its optimizer.
//!
//! The model is a logit table indexed by (log-SNR bucket, observed token,
//! predicted token); predictions are softmax over non-mask tokens. It is the
//! smallest model that lets the full training/evaluation/scaling pipeline run
//! end to end, with exact gradients of the surrogate loss.
//!
//! Updates follow the LaProp rule: the gradient is normalized by the
//! bias-corrected second moment first, and the normalized gradient is fed
//! into the first-moment accumulator,
//!
//! ```text
//! v <- beta2 v + (1 - beta2) g^2
//! m <- beta1 m + (1 - beta1) g / (sqrt(v / (1 - beta2^t)) + eps)
//! theta <- theta - lr_t * m / (1 - beta1^t)
//! ```
//!
//! with the learning rate warmed up linearly and held constant afterwards.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::categorical::CategoricalVec;
use crate::elbo::{nelbo_quadrature, predicted_marginal};
use crate::error::{GiddError, Result};
use crate::process::NoiseProcess;
use crate::schedule::LogSnr;
use crate::vocab::TokenSequence;

use super::{Denoiser, DenoiserOutput, EnumerableDataset};

/// Optimizer and minibatch settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub learning_rate: f64,
    /// Minibatch size in sequences.
    pub batch_size: usize,
    /// Linear warmup horizon in steps.
    pub warmup_steps: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.99,
            eps: 1e-8,
            learning_rate: 0.05,
            batch_size: 32,
            warmup_steps: 2000,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && self.learning_rate >= 0.0
            && self.batch_size >= 1;
        if ok {
            Ok(())
        } else {
            Err(GiddError::Training {
                step: 0,
                message: format!("invalid optimizer config: {self:?}"),
            })
        }
    }
}

/// LaProp moment tables and step counter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaPropState {
    pub first: Vec<f64>,
    pub second: Vec<f64>,
    pub step: usize,
}

impl LaPropState {
    fn new(n: usize) -> Self {
        Self {
            first: vec![0.0; n],
            second: vec![0.0; n],
            step: 0,
        }
    }

    fn update(&mut self, params: &mut [f64], grads: &[f64], cfg: &OptimizerConfig, lr: f64) {
        self.step += 1;
        let t = self.step as i32;
        let bc2 = 1.0 - cfg.beta2.powi(t);
        let bc1 = 1.0 - cfg.beta1.powi(t);
        for i in 0..params.len() {
            let g = grads[i];
            self.second[i] = cfg.beta2 * self.second[i] + (1.0 - cfg.beta2) * g * g;
            let normalized = g / ((self.second[i] / bc2).sqrt() + cfg.eps);
            self.first[i] = cfg.beta1 * self.first[i] + (1.0 - cfg.beta1) * normalized;
            params[i] -= lr * self.first[i] / bc1;
        }
    }
}

/// Logit-table denoiser over (log-SNR bucket, observed token, predicted
/// token). Predictions are softmax-restricted to non-mask tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularDenoiser {
    process: NoiseProcess,
    n_buckets: usize,
    logits: Vec<f64>,
}

impl TabularDenoiser {
    /// Zero-initialized table (uniform predictions everywhere).
    pub fn new(process: NoiseProcess, n_buckets: usize) -> Result<Self> {
        if n_buckets == 0 {
            return Err(GiddError::Training {
                step: 0,
                message: "need at least one log-SNR bucket".into(),
            });
        }
        let n = process.vocab().size();
        Ok(Self {
            process,
            n_buckets,
            logits: vec![0.0; n_buckets * n * n],
        })
    }

    pub fn process(&self) -> &NoiseProcess {
        &self.process
    }

    pub fn n_buckets(&self) -> usize {
        self.n_buckets
    }

    /// Number of logit parameters; the model-size proxy for FLOP accounting
    /// (FLOPs-per-token is 6x this).
    pub fn param_count(&self) -> usize {
        self.logits.len()
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn logits_mut(&mut self) -> &mut [f64] {
        &mut self.logits
    }

    /// Uniform-width bucket index with the top edge mapped into the last
    /// bucket.
    pub fn bucket(&self, lambda: LogSnr) -> usize {
        let lo = self.process.schedule().lambda_min();
        let hi = self.process.schedule().lambda_max();
        let frac = (lambda.value() - lo) / (hi - lo);
        ((frac * self.n_buckets as f64) as usize).min(self.n_buckets - 1)
    }

    fn row_offset(&self, bucket: usize, z: usize) -> usize {
        let n = self.process.vocab().size();
        (bucket * n + z) * n
    }

    /// Softmax over non-mask tokens of the row for (bucket(lambda), z).
    fn predict_position(&self, z: usize, lambda: LogSnr) -> Result<CategoricalVec> {
        self.process.schedule().check_lambda(lambda)?;
        self.process.vocab().check_token(z)?;
        let n = self.process.vocab().size();
        let mask = self.process.vocab().mask_id();
        let row = &self.logits[self.row_offset(self.bucket(lambda), z)..][..n];
        let mut max = f64::NEG_INFINITY;
        for v in 0..n {
            if v != mask && row[v] > max {
                max = row[v];
            }
        }
        let mut probs = vec![0.0; n];
        let mut sum = 0.0;
        for v in 0..n {
            if v != mask {
                let e = (row[v] - max).exp();
                probs[v] = e;
                sum += e;
            }
        }
        for p in probs.iter_mut() {
            *p /= sum;
        }
        CategoricalVec::new(probs)
    }

    /// Gradient of one position's point-wise loss with respect to this row's
    /// logits. Returns the loss; accumulates into `grad_row`.
    fn position_loss_and_grad(
        &self,
        x: usize,
        z: usize,
        lambda: LogSnr,
        grad_row: &mut [f64],
    ) -> Result<f64> {
        let vocab = self.process.vocab();
        let mask = vocab.mask_id();
        let n = vocab.size();
        let w = self.process.elbo_weight(x, z, lambda)?;
        let x_hat = self.predict_position(z, lambda)?;
        let q_x = self.process.forward_marginal(x, lambda)?;
        let q_hat = predicted_marginal(&self.process, &x_hat, lambda)?;
        let (alpha, _) = lambda.alpha_beta();

        let mut loss = 0.0;
        // d(loss)/d(x_hat_v), KL part plus the IS spike at v = z
        let mut g = vec![0.0; n];
        for v in 0..n {
            let p = q_x.prob(v);
            if p > 0.0 {
                let q = q_hat.prob(v);
                loss += p * (p / q).ln();
                g[v] += w * alpha * (-p / q);
            }
        }
        let pz = q_x.prob(z);
        let qz = q_hat.prob(z);
        let r = pz / qz;
        loss += r - r.ln() - 1.0;
        g[z] += w * alpha * (1.0 / qz - pz / (qz * qz));

        // softmax Jacobian over the non-mask support
        let mut g_dot_xhat = 0.0;
        for v in 0..n {
            if v != mask {
                g_dot_xhat += g[v] * x_hat.prob(v);
            }
        }
        for v in 0..n {
            if v != mask {
                grad_row[v] += x_hat.prob(v) * (g[v] - g_dot_xhat);
            }
        }
        Ok(w * loss)
    }
}

impl TabularDenoiser {
    /// Surrogate loss of one `(clean, noisy, log-SNRs)` triple together with
    /// its exact gradient with respect to the full logit table. The gradient
    /// is accumulated into `grads` (same length as the table).
    pub fn surrogate_loss_and_grad(
        &self,
        seq: &TokenSequence,
        noisy: &TokenSequence,
        lambdas: &[LogSnr],
        grads: &mut [f64],
    ) -> Result<f64> {
        if lambdas.len() != seq.len() || noisy.len() != seq.len() {
            return Err(GiddError::Estimator(
                "one noisy token and one log-SNR per position required".into(),
            ));
        }
        if grads.len() != self.logits.len() {
            return Err(GiddError::Estimator(format!(
                "gradient buffer of {} entries does not match the {}-entry table",
                grads.len(),
                self.logits.len()
            )));
        }
        let n = self.process.vocab().size();
        let mut total = 0.0;
        for i in 0..seq.len() {
            let offset = self.row_offset(self.bucket(lambdas[i]), noisy[i]);
            total += self.position_loss_and_grad(
                seq[i],
                noisy[i],
                lambdas[i],
                &mut grads[offset..offset + n],
            )?;
        }
        Ok(total)
    }
}

impl Denoiser for TabularDenoiser {
    fn predict(&self, z: &TokenSequence, lambdas: &[LogSnr]) -> Result<DenoiserOutput> {
        if lambdas.len() != z.len() {
            return Err(GiddError::Estimator(
                "one log-SNR per position required".into(),
            ));
        }
        let positions = z
            .tokens()
            .iter()
            .zip(lambdas)
            .map(|(&zi, &li)| self.predict_position(zi, li))
            .collect::<Result<Vec<_>>>()?;
        DenoiserOutput::new(self.process.vocab(), positions)
    }
}

/// One logged point of a training run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    pub step: usize,
    /// Cumulative tokens seen, `step * batch_size * seq_len`.
    pub tokens: u64,
    /// Minibatch surrogate loss, nats per token.
    pub surrogate: f64,
    /// Quadrature NELBO over the dataset, nats per token (eval steps only).
    pub nelbo: Option<f64>,
}

/// The loss trajectory of one training run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossCurve {
    pub points: Vec<LossPoint>,
}

/// Data-pipeline settings for [`train_tabular`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingOptions {
    pub n_steps: usize,
    pub rng_seed: u64,
    /// Fraction of samples given independent per-token noise levels.
    pub forcing_fraction: f64,
    /// Fraction of samples with a noise-free prompt prefix excluded from the
    /// loss; prompt length is `min(floor(len * acos(r)), len - 1)`.
    pub prompt_fraction: f64,
    /// Appends `floor(f * len)` empty tokens with `f ~ U(0, max)`; requires
    /// the vocabulary to reserve an empty symbol when positive.
    pub empty_fraction_max: f64,
    /// Evaluate the quadrature NELBO every this many steps (0 disables).
    pub eval_every: usize,
    /// Grid resolution of the evaluation NELBO.
    pub eval_grid: usize,
    /// Record a surrogate-loss point every this many steps.
    pub log_every: usize,
}

impl Default for TrainingOptions {
    fn default() -> Self {
        Self {
            n_steps: 1000,
            rng_seed: 0,
            forcing_fraction: 0.5,
            prompt_fraction: 0.0,
            empty_fraction_max: 0.0,
            eval_every: 0,
            eval_grid: 64,
            log_every: 10,
        }
    }
}

impl TrainingOptions {
    fn validate(&self, process: &NoiseProcess) -> Result<()> {
        for (name, f) in [
            ("forcing_fraction", self.forcing_fraction),
            ("prompt_fraction", self.prompt_fraction),
            ("empty_fraction_max", self.empty_fraction_max),
        ] {
            if !(0.0..=1.0).contains(&f) {
                return Err(GiddError::Training {
                    step: 0,
                    message: format!("{name} must lie in [0, 1], got {f}"),
                });
            }
        }
        if self.n_steps == 0 {
            return Err(GiddError::Training {
                step: 0,
                message: "need at least one step".into(),
            });
        }
        if self.empty_fraction_max > 0.0 && process.vocab().empty_id().is_none() {
            return Err(GiddError::Training {
                step: 0,
                message: "empty-token augmentation requires an empty symbol".into(),
            });
        }
        Ok(())
    }
}

/// Train a tabular denoiser on the surrogate loss over an enumerable dataset.
/// Deterministic given the seed.
pub fn train_tabular(
    data: &EnumerableDataset,
    process: &NoiseProcess,
    n_buckets: usize,
    cfg: &OptimizerConfig,
    opts: &TrainingOptions,
) -> Result<(TabularDenoiser, LossCurve)> {
    cfg.validate()?;
    opts.validate(process)?;
    data.validate(process.vocab())?;
    let mut model = TabularDenoiser::new(*process, n_buckets)?;
    let mut state = LaPropState::new(model.logits.len());
    let mut grads = vec![0.0; model.logits.len()];
    let mut curve = LossCurve::default();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.rng_seed);
    let lo = process.schedule().lambda_min();
    let hi = process.schedule().lambda_max();
    let base_len = data.seq_len();

    for step in 1..=opts.n_steps {
        grads.iter_mut().for_each(|g| *g = 0.0);
        let mut batch_loss = 0.0;
        let mut batch_tokens = 0usize;
        for _ in 0..cfg.batch_size {
            let seq = &data.sequences()[data.sample_index(rng.gen())];
            let mut tokens: Vec<usize> = seq.tokens().to_vec();
            if opts.empty_fraction_max > 0.0 {
                let f: f64 = rng.gen::<f64>() * opts.empty_fraction_max;
                let n_empty = (f * base_len as f64) as usize;
                let empty = process.vocab().empty_id().expect("validated");
                tokens.extend(std::iter::repeat(empty).take(n_empty));
            }
            let len = tokens.len();
            let prompt_len = if rng.gen::<f64>() < opts.prompt_fraction {
                let r: f64 = rng.gen();
                ((len as f64 * r.acos()) as usize).min(len - 1)
            } else {
                0
            };
            let forcing = rng.gen::<f64>() < opts.forcing_fraction;
            let shared = LogSnr(sample_linear_lambda(&mut rng, lo, hi));
            let mut lambdas = Vec::with_capacity(len);
            let mut noisy = Vec::with_capacity(len);
            for (i, &x) in tokens.iter().enumerate() {
                let lambda = if i < prompt_len {
                    LogSnr(hi)
                } else if forcing {
                    LogSnr(sample_linear_lambda(&mut rng, lo, hi))
                } else {
                    shared
                };
                lambdas.push(lambda);
                if i < prompt_len {
                    noisy.push(x);
                } else {
                    let q = process.forward_marginal(x, lambda)?;
                    noisy.push(q.sample_with(rng.gen()));
                }
            }
            for i in prompt_len..len {
                let offset = model.row_offset(model.bucket(lambdas[i]), noisy[i]);
                let n = process.vocab().size();
                let loss = model.position_loss_and_grad(
                    tokens[i],
                    noisy[i],
                    lambdas[i],
                    &mut grads[offset..offset + n],
                )?;
                batch_loss += loss;
                batch_tokens += 1;
            }
        }
        if batch_tokens > 0 {
            let scale = 1.0 / batch_tokens as f64;
            batch_loss *= scale;
            grads.iter_mut().for_each(|g| *g *= scale);
        }
        if !batch_loss.is_finite() {
            return Err(GiddError::Training {
                step,
                message: format!("non-finite loss {batch_loss}"),
            });
        }
        let warm = if cfg.warmup_steps > 0 {
            (step as f64 / cfg.warmup_steps as f64).min(1.0)
        } else {
            1.0
        };
        state.update(&mut model.logits, &grads, cfg, warm * cfg.learning_rate);

        let tokens_seen = (step * cfg.batch_size * base_len) as u64;
        let eval_due = opts.eval_every > 0 && (step % opts.eval_every == 0 || step == opts.n_steps);
        if eval_due {
            let nelbo = dataset_nelbo(&model, data, process, opts.eval_grid)?;
            curve.points.push(LossPoint {
                step,
                tokens: tokens_seen,
                surrogate: batch_loss,
                nelbo: Some(nelbo),
            });
        } else if opts.log_every > 0 && (step % opts.log_every == 0 || step == opts.n_steps) {
            curve.points.push(LossPoint {
                step,
                tokens: tokens_seen,
                surrogate: batch_loss,
                nelbo: None,
            });
        }
    }
    Ok((model, curve))
}

/// Weighted mean quadrature NELBO of a denoiser over a dataset.
pub fn dataset_nelbo(
    denoiser: &dyn Denoiser,
    data: &EnumerableDataset,
    process: &NoiseProcess,
    n_grid: usize,
) -> Result<f64> {
    let mut total = 0.0;
    for (seq, w) in data.iter() {
        if w == 0.0 {
            continue;
        }
        total += w * nelbo_quadrature(seq, denoiser, process, n_grid)?.value;
    }
    Ok(total)
}

/// Inverse-CDF draw from the linear-schedule density, clamped to the range.
fn sample_linear_lambda<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    let u: f64 = rng.gen();
    if u <= 0.0 {
        return lo;
    }
    crate::math::logit(u).clamp(lo, hi)
}

/// Versioned checkpoint payload for persisting a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub schema_version: u32,
    pub model: TabularDenoiser,
    pub optimizer: Option<LaPropState>,
    pub config: OptimizerConfig,
}

impl Checkpoint {
    pub const SCHEMA_VERSION: u32 = 1;

    pub fn new(model: TabularDenoiser, config: OptimizerConfig) -> Self {
        Self {
            schema_version: Self::SCHEMA_VERSION,
            model,
            optimizer: None,
            config,
        }
    }
}

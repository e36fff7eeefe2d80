//! Backward posterior, ancestral generation, and confidence-based adaptive
//! sampling, including anisotropic (per-token) denoising schedules.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::categorical::CategoricalVec;
use crate::denoiser::{Denoiser, DenoiserOutput};
use crate::error::{GiddError, Result};
use crate::math::logit;
use crate::process::NoiseProcess;
use crate::schedule::LogSnr;
use crate::vocab::TokenSequence;

/// Conditional backward step: `q_{s|t}(z_s | z_t, x)` for `lambda_s >
/// lambda_t`, computed by explicit summation over the vocabulary.
pub fn backward_posterior(
    process: &NoiseProcess,
    z_t: usize,
    x: usize,
    lambda_s: LogSnr,
    lambda_t: LogSnr,
) -> Result<CategoricalVec> {
    let vocab = process.vocab();
    vocab.check_token(z_t)?;
    vocab.check_token(x)?;
    if lambda_s.value() < lambda_t.value() {
        return Err(GiddError::TransitionOrdering {
            lambda_s: lambda_s.value(),
            lambda_t: lambda_t.value(),
        });
    }
    let q_s = process.forward_marginal(x, lambda_s)?;
    let mut weights = vec![0.0; vocab.size()];
    let mut total = 0.0;
    for z_s in 0..vocab.size() {
        let p_zs = q_s.prob(z_s);
        if p_zs == 0.0 {
            continue;
        }
        let trans = process.forward_transition(z_s, lambda_s, lambda_t)?;
        let w = trans.prob(z_t) * p_zs;
        weights[z_s] = w;
        total += w;
    }
    if total <= 0.0 {
        return Err(GiddError::Sampler(format!(
            "state z_t={z_t} is impossible given x={x} at lambda_t={}",
            lambda_t.value()
        )));
    }
    CategoricalVec::normalized(weights)
}

/// Per-token log-SNR levels visited during denoising, from `lambda_min` up
/// to `lambda_max` over `T` steps (`T + 1` levels).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiseSchedule {
    /// `trajectories[i][j]`: level of position `i` after `j` steps. One
    /// shared trajectory when isotropic.
    trajectories: Vec<Vec<f64>>,
    anisotropic: bool,
}

impl DenoiseSchedule {
    /// Isotropic schedule with levels uniformly spaced in log-SNR.
    pub fn uniform_lambda(lambda_min: f64, lambda_max: f64, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(GiddError::Sampler("need at least one step".into()));
        }
        let h = (lambda_max - lambda_min) / steps as f64;
        let levels: Vec<f64> = (0..=steps).map(|j| lambda_min + h * j as f64).collect();
        Self::isotropic(levels)
    }

    /// Isotropic schedule uniform in time under the linear schedule
    /// `alpha = 1 - t` (levels uniform in signal strength).
    pub fn uniform_time(lambda_min: f64, lambda_max: f64, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(GiddError::Sampler("need at least one step".into()));
        }
        let a_lo = crate::math::sigmoid(lambda_min);
        let a_hi = crate::math::sigmoid(lambda_max);
        let levels: Vec<f64> = (0..=steps)
            .map(|j| {
                if j == 0 {
                    lambda_min
                } else if j == steps {
                    lambda_max
                } else {
                    logit(a_lo + (a_hi - a_lo) * j as f64 / steps as f64)
                }
            })
            .collect();
        Self::isotropic(levels)
    }

    /// Isotropic schedule from explicit strictly increasing levels.
    pub fn isotropic(levels: Vec<f64>) -> Result<Self> {
        if levels.len() < 2 {
            return Err(GiddError::Sampler("need at least two levels".into()));
        }
        if levels.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(GiddError::Sampler(
                "levels must be strictly increasing".into(),
            ));
        }
        Ok(Self {
            trajectories: vec![levels],
            anisotropic: false,
        })
    }

    /// Anisotropic schedule from per-token trajectories (non-decreasing,
    /// shared length, shared endpoints).
    pub fn anisotropic(trajectories: Vec<Vec<f64>>) -> Result<Self> {
        if trajectories.is_empty() {
            return Err(GiddError::Sampler("need at least one trajectory".into()));
        }
        let len = trajectories[0].len();
        if len < 2 {
            return Err(GiddError::Sampler("need at least two levels".into()));
        }
        let first = trajectories[0][0];
        let last = trajectories[0][len - 1];
        for t in &trajectories {
            if t.len() != len {
                return Err(GiddError::Sampler("trajectory lengths differ".into()));
            }
            if t.windows(2).any(|w| w[0] > w[1]) {
                return Err(GiddError::Sampler(
                    "trajectories must be non-decreasing".into(),
                ));
            }
            if t[0] != first || t[len - 1] != last {
                return Err(GiddError::Sampler(
                    "trajectories must share their endpoints".into(),
                ));
            }
        }
        Ok(Self {
            trajectories,
            anisotropic: true,
        })
    }

    /// One position fully denoised per step, in the given order: the
    /// anisotropic schedule realizing order-random autoregressive infilling
    /// under masking noise.
    pub fn one_position_per_step(
        order: &[usize],
        lambda_min: f64,
        lambda_max: f64,
    ) -> Result<Self> {
        let n = order.len();
        if n == 0 {
            return Err(GiddError::Sampler("empty position order".into()));
        }
        let mut seen = vec![false; n];
        for &p in order {
            if p >= n || seen[p] {
                return Err(GiddError::Sampler("order must be a permutation".into()));
            }
            seen[p] = true;
        }
        let mut trajectories = vec![vec![lambda_min; n + 1]; n];
        for (rank, &pos) in order.iter().enumerate() {
            for level in trajectories[pos].iter_mut().skip(rank + 1) {
                *level = lambda_max;
            }
        }
        Ok(Self {
            trajectories,
            anisotropic: true,
        })
    }

    pub fn steps(&self) -> usize {
        self.trajectories[0].len() - 1
    }

    pub fn is_anisotropic(&self) -> bool {
        self.anisotropic
    }

    /// Level of position `i` after `j` steps.
    pub fn level(&self, position: usize, j: usize) -> f64 {
        if self.anisotropic {
            self.trajectories[position][j]
        } else {
            self.trajectories[0][j]
        }
    }

    fn check_len(&self, seq_len: usize) -> Result<()> {
        if self.anisotropic && self.trajectories.len() != seq_len {
            return Err(GiddError::Sampler(format!(
                "anisotropic schedule covers {} positions, sequence has {seq_len}",
                self.trajectories.len()
            )));
        }
        Ok(())
    }
}

/// Full record of one sampling trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleTrace {
    /// Sequence state after each step; index 0 is the prior draw.
    pub states: Vec<TokenSequence>,
    /// Per-step confidence scores (adaptive sampling only).
    pub confidences: Vec<Vec<f64>>,
    /// The final sequence.
    pub final_sequence: TokenSequence,
}

fn init_state<R: Rng>(
    process: &NoiseProcess,
    seq_len: usize,
    prompt: Option<&[usize]>,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let prior = process.prior_dist();
    let prompt = prompt.unwrap_or(&[]);
    if prompt.len() > seq_len {
        return Err(GiddError::Sampler(format!(
            "prompt of {} tokens exceeds sequence length {seq_len}",
            prompt.len()
        )));
    }
    for &t in prompt {
        process.vocab().check_token(t)?;
    }
    let mut state = Vec::with_capacity(seq_len);
    state.extend_from_slice(prompt);
    for _ in prompt.len()..seq_len {
        state.push(prior.sample_with(rng.gen()));
    }
    Ok(state)
}

/// Ancestral sampling: initialize at the prior and walk the denoising
/// schedule, sampling each position from the denoiser-mixed backward
/// posterior. Prompt positions are held fixed. Deterministic given the seed.
pub fn ancestral_sample(
    denoiser: &dyn Denoiser,
    process: &NoiseProcess,
    schedule: &DenoiseSchedule,
    seq_len: usize,
    prompt: Option<&[usize]>,
    rng_seed: u64,
) -> Result<SampleTrace> {
    schedule.check_len(seq_len)?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let prompt_len = prompt.map_or(0, <[usize]>::len);
    let mut state = init_state(process, seq_len, prompt, &mut rng)?;
    let mut states = vec![TokenSequence::new(state.clone())];
    let hi = process.schedule().lambda_max();

    for j in 0..schedule.steps() {
        let lambdas: Vec<LogSnr> = (0..seq_len)
            .map(|i| {
                if i < prompt_len {
                    LogSnr(hi)
                } else {
                    LogSnr(schedule.level(i, j))
                }
            })
            .collect();
        let x_hat = denoiser.predict(&TokenSequence::new(state.clone()), &lambdas)?;
        for i in prompt_len..seq_len {
            let cur = LogSnr(schedule.level(i, j));
            let next = LogSnr(schedule.level(i, j + 1));
            if next.value() == cur.value() {
                continue;
            }
            let mixed = mixed_backward(process, state[i], x_hat.position(i), next, cur)?;
            state[i] = mixed.sample_with(rng.gen());
        }
        states.push(TokenSequence::new(state.clone()));
    }
    Ok(SampleTrace {
        final_sequence: TokenSequence::new(state),
        states,
        confidences: Vec::new(),
    })
}

/// Denoiser-mixed backward distribution
/// `sum_x x_hat(x) q_{s|t}(z_s | z_t, x)`, renormalized over the predictions
/// consistent with the current state.
fn mixed_backward(
    process: &NoiseProcess,
    z_t: usize,
    x_hat: &CategoricalVec,
    lambda_s: LogSnr,
    lambda_t: LogSnr,
) -> Result<CategoricalVec> {
    let n = process.vocab().size();
    let mut mixture = vec![0.0; n];
    let mut total = 0.0;
    for x in 0..n {
        let p_x = x_hat.prob(x);
        if p_x == 0.0 {
            continue;
        }
        // skip predictions inconsistent with the observed state
        let q_t = process.forward_marginal(x, lambda_t)?;
        if q_t.prob(z_t) == 0.0 {
            continue;
        }
        let post = backward_posterior(process, z_t, x, lambda_s, lambda_t)?;
        for (m, p) in mixture.iter_mut().zip(post.iter()) {
            *m += p_x * p;
        }
        total += p_x;
    }
    if total <= 0.0 {
        return Err(GiddError::Sampler(format!(
            "no prediction is consistent with state z={z_t}"
        )));
    }
    CategoricalVec::normalized(mixture)
}

/// Generalized confidence scores,
/// `conf_i = prior(z_i) * (max_v p_i(v) - p_i(z_i))`.
///
/// Under pure masking this is the standard masked-diffusion heuristic: zero
/// at unmasked positions, the max predicted probability at masked ones.
pub fn confidence_scores(
    output: &DenoiserOutput,
    z: &TokenSequence,
    prior: &CategoricalVec,
) -> Vec<f64> {
    z.tokens()
        .iter()
        .enumerate()
        .map(|(i, &zi)| {
            let p = output.position(i);
            prior.prob(zi) * (p.max_prob() - p.prob(zi))
        })
        .collect()
}

/// Options for [`adaptive_sample`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveOptions {
    /// Positions fully denoised per step.
    pub top_k: usize,
    /// Allow already-committed positions to be re-selected and revised
    /// (useful under uniform noise when running more steps than tokens).
    pub allow_reselect: bool,
}

impl Default for AdaptiveOptions {
    fn default() -> Self {
        Self {
            top_k: 1,
            allow_reselect: false,
        }
    }
}

/// Confidence-based adaptive sampling: per step, the `top_k` highest-scoring
/// positions are set to the denoiser's argmax token and pinned at
/// `lambda_max`. Runs `steps` iterations or until every position is pinned.
/// Ties break toward the lowest position index.
pub fn adaptive_sample(
    denoiser: &dyn Denoiser,
    process: &NoiseProcess,
    steps: usize,
    seq_len: usize,
    prompt: Option<&[usize]>,
    options: &AdaptiveOptions,
    rng_seed: u64,
) -> Result<SampleTrace> {
    if steps == 0 {
        return Err(GiddError::Sampler("need at least one step".into()));
    }
    if options.top_k == 0 {
        return Err(GiddError::Sampler("top_k must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let prompt_len = prompt.map_or(0, <[usize]>::len);
    let mut state = init_state(process, seq_len, prompt, &mut rng)?;
    let lo = process.schedule().lambda_min();
    let hi = process.schedule().lambda_max();
    let mut lambdas: Vec<LogSnr> = (0..seq_len)
        .map(|i| if i < prompt_len { LogSnr(hi) } else { LogSnr(lo) })
        .collect();
    let mut pinned: Vec<bool> = (0..seq_len).map(|i| i < prompt_len).collect();
    let prior = process.prior_dist();
    let mut states = vec![TokenSequence::new(state.clone())];
    let mut confidences = Vec::new();

    for _ in 0..steps {
        if pinned[prompt_len..].iter().all(|&p| p) && !options.allow_reselect {
            break;
        }
        let x_hat = denoiser.predict(&TokenSequence::new(state.clone()), &lambdas)?;
        let conf = confidence_scores(&x_hat, &TokenSequence::new(state.clone()), &prior);
        let mut candidates: Vec<usize> = (prompt_len..seq_len)
            .filter(|&i| options.allow_reselect || !pinned[i])
            .collect();
        if candidates.is_empty() {
            break;
        }
        // stable selection: higher confidence first, lowest index on ties
        candidates.sort_by(|&a, &b| {
            conf[b]
                .partial_cmp(&conf[a])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        for &i in candidates.iter().take(options.top_k) {
            state[i] = x_hat.position(i).argmax();
            lambdas[i] = LogSnr(hi);
            pinned[i] = true;
        }
        states.push(TokenSequence::new(state.clone()));
        confidences.push(conf);
    }
    Ok(SampleTrace {
        final_sequence: TokenSequence::new(state),
        states,
        confidences,
    })
}

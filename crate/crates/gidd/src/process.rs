//! Exact forward diffusion machinery parameterized by log-SNR.
//!
//! A [`NoiseProcess`] couples a [`MixingSchedule`] with a [`Vocab`] and
//! exposes the mixing distribution and its derivative, forward marginals and
//! conditional transitions, the prior, and the ELBO weighting vector. All
//! operations are pure functions of value inputs.

use serde::{Deserialize, Serialize};

use crate::categorical::CategoricalVec;
use crate::error::{GiddError, Result};
use crate::math::sigmoid_deriv;
use crate::schedule::{LogSnr, MixingSchedule};
use crate::vocab::Vocab;

/// Forward process: interpolation between data and the hybrid mixing
/// distribution, with all quantities indexed by log-SNR.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseProcess {
    schedule: MixingSchedule,
    vocab: Vocab,
}

impl NoiseProcess {
    pub fn new(schedule: MixingSchedule, vocab: Vocab) -> Self {
        Self { schedule, vocab }
    }

    pub fn schedule(&self) -> &MixingSchedule {
        &self.schedule
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    /// Mixing distribution `pi_lambda`: a sigmoid blend of uniform noise over
    /// the non-mask symbols and the mask one-hot.
    pub fn mixing_dist(&self, lambda: LogSnr) -> Result<CategoricalVec> {
        self.schedule.check_lambda(lambda)?;
        let w_u = self.schedule.uniform_weight(lambda);
        let w_m = 1.0 - w_u;
        let n = self.vocab.size();
        let u = w_u / (n - 1) as f64;
        let mut probs = vec![u; n];
        probs[self.vocab.mask_id()] = w_m;
        CategoricalVec::new(probs)
    }

    /// Derivative of the mixing distribution with respect to log-SNR:
    /// `a * sigmoid'(a*lambda + b) * (u - m)`. Entries sum to zero.
    pub fn mixing_dist_deriv(&self, lambda: LogSnr) -> Result<Vec<f64>> {
        self.schedule.check_lambda(lambda)?;
        let a = self.schedule.a();
        let g = a * sigmoid_deriv(a * lambda.value() + self.schedule.b());
        let n = self.vocab.size();
        let u = g / (n - 1) as f64;
        let mut d = vec![u; n];
        d[self.vocab.mask_id()] = -g;
        Ok(d)
    }

    /// Forward marginal `q_lambda(x) = alpha * onehot(x) + beta * pi_lambda`.
    pub fn forward_marginal(&self, x: usize, lambda: LogSnr) -> Result<CategoricalVec> {
        self.vocab.check_token(x)?;
        let (alpha, beta) = lambda.alpha_beta();
        let pi = self.mixing_dist(lambda)?;
        let mut probs: Vec<f64> = pi.iter().map(|p| beta * p).collect();
        probs[x] += alpha;
        CategoricalVec::new(probs)
    }

    /// Conditional transition from state `z_s` at `lambda_s` to the lower SNR
    /// `lambda_t`:
    /// `alpha_{t|s} * onehot(z_s) + [beta_t. pi_t - alpha_{t|s} * beta_s. pi_s]`
    /// with `alpha_{t|s} = alpha_t / alpha_s`.
    ///
    /// Tiny negative dust (within 1e-12) is clamped and the vector is
    /// renormalized; a genuinely negative entry means the schedule does not
    /// admit a valid Markov transition and is reported as an error.
    pub fn forward_transition(
        &self,
        z_s: usize,
        lambda_s: LogSnr,
        lambda_t: LogSnr,
    ) -> Result<CategoricalVec> {
        self.vocab.check_token(z_s)?;
        self.schedule.check_lambda(lambda_s)?;
        self.schedule.check_lambda(lambda_t)?;
        if lambda_s.value() < lambda_t.value() {
            return Err(GiddError::TransitionOrdering {
                lambda_s: lambda_s.value(),
                lambda_t: lambda_t.value(),
            });
        }
        let (alpha_s, beta_s) = lambda_s.alpha_beta();
        let (alpha_t, beta_t) = lambda_t.alpha_beta();
        let alpha_ts = alpha_t / alpha_s;
        let pi_s = self.mixing_dist(lambda_s)?;
        let pi_t = self.mixing_dist(lambda_t)?;
        let mut probs: Vec<f64> = pi_t
            .iter()
            .zip(pi_s.iter())
            .map(|(pt, ps)| beta_t * pt - alpha_ts * beta_s * ps)
            .collect();
        probs[z_s] += alpha_ts;
        for &p in &probs {
            if p < -1e-12 {
                return Err(GiddError::InvalidSchedule(format!(
                    "transition {} -> {} produced negative probability {p}",
                    lambda_s.value(),
                    lambda_t.value()
                )));
            }
        }
        for p in probs.iter_mut() {
            if *p < 0.0 {
                *p = 0.0;
            }
        }
        CategoricalVec::normalized(probs)
    }

    /// ELBO weight at coordinate `z`:
    /// `[beta * (pi_lambda - pi_lambda')]_z / q_lambda(x)_z`.
    ///
    /// Equals 1 at the mask and 0 at the clean token in the pure-masking
    /// limit. Errors when `q_lambda(x)_z = 0` (cannot happen for `z` drawn
    /// from the forward marginal).
    pub fn elbo_weight(&self, x: usize, z: usize, lambda: LogSnr) -> Result<f64> {
        self.vocab.check_token(z)?;
        let num = self.weight_numerator(z, lambda)?;
        let q = self.forward_marginal(x, lambda)?;
        let qz = q.prob(z);
        if qz <= 0.0 {
            return Err(GiddError::UndefinedWeight { z });
        }
        Ok(num / qz)
    }

    /// Numerator of the ELBO weight, `[beta * (pi_lambda - pi_lambda')]_z`.
    /// This is also the integrand measure of the quadrature NELBO.
    pub fn weight_numerator(&self, z: usize, lambda: LogSnr) -> Result<f64> {
        let beta = lambda.beta();
        let pi = self.mixing_dist(lambda)?;
        let dpi = self.mixing_dist_deriv(lambda)?;
        let v = beta * (pi.prob(z) - dpi[z]);
        // Clamp rounding dust; validity of the schedule guarantees >= 0.
        Ok(v.max(0.0))
    }

    /// Prior distribution used for sampler initialization and confidence
    /// scoring: the forward marginal at `lambda_min`, averaged over a uniform
    /// reference token, so the residual signal mass at the clamp is spread
    /// over the non-mask symbols:
    /// `alpha_min * u + beta_min * pi_{lambda_min}`.
    pub fn prior_dist(&self) -> CategoricalVec {
        let lambda = LogSnr(self.schedule.lambda_min());
        let (alpha, beta) = lambda.alpha_beta();
        let pi = self.mixing_dist(lambda).expect("lambda_min in range");
        let n = self.vocab.size();
        let u = alpha / (n - 1) as f64;
        let mut probs: Vec<f64> = pi.iter().map(|p| beta * p).collect();
        for (i, p) in probs.iter_mut().enumerate() {
            if i != self.vocab.mask_id() {
                *p += u;
            }
        }
        CategoricalVec::new(probs).expect("convex combination")
    }
}

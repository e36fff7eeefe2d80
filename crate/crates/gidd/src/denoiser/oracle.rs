//! Exact Bayes-posterior denoiser over an enumerable dataset.

use serde::{Deserialize, Serialize};

use crate::categorical::CategoricalVec;
use crate::error::{GiddError, Result};
use crate::process::NoiseProcess;
use crate::schedule::LogSnr;
use crate::vocab::{TokenSequence, Vocab};

use super::{Denoiser, DenoiserOutput};

/// Hard cap on dataset size so posterior enumeration stays tractable.
pub const MAX_DATASET_SIZE: usize = 10_000;

/// A finite weighted collection of equal-length sequences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnumerableDataset {
    sequences: Vec<TokenSequence>,
    weights: Vec<f64>,
}

impl EnumerableDataset {
    pub fn new(sequences: Vec<TokenSequence>, weights: Vec<f64>) -> Result<Self> {
        if sequences.is_empty() {
            return Err(GiddError::Dataset("dataset is empty".into()));
        }
        if sequences.len() > MAX_DATASET_SIZE {
            return Err(GiddError::Dataset(format!(
                "dataset has {} sequences, cap is {MAX_DATASET_SIZE}",
                sequences.len()
            )));
        }
        if sequences.len() != weights.len() {
            return Err(GiddError::Dataset(
                "sequence and weight counts differ".into(),
            ));
        }
        let len = sequences[0].len();
        if len == 0 {
            return Err(GiddError::Dataset("sequences must be non-empty".into()));
        }
        if sequences.iter().any(|s| s.len() != len) {
            return Err(GiddError::Dataset("sequences have unequal lengths".into()));
        }
        let sum: f64 = weights.iter().sum();
        if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) || (sum - 1.0).abs() > 1e-9 {
            return Err(GiddError::Dataset(format!(
                "weights must be non-negative and sum to 1, got sum {sum}"
            )));
        }
        Ok(Self { sequences, weights })
    }

    /// Equal-weight dataset.
    pub fn uniform(sequences: Vec<TokenSequence>) -> Result<Self> {
        let n = sequences.len().max(1);
        let w = vec![1.0 / n as f64; sequences.len()];
        Self::new(sequences, w)
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn seq_len(&self) -> usize {
        self.sequences[0].len()
    }

    pub fn sequences(&self) -> &[TokenSequence] {
        &self.sequences
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn iter(&self) -> impl Iterator<Item = (&TokenSequence, f64)> {
        self.sequences.iter().zip(self.weights.iter().copied())
    }

    /// Validate tokens against a vocabulary (data must be mask-free).
    pub fn validate(&self, vocab: &Vocab) -> Result<()> {
        for s in &self.sequences {
            s.validate(vocab)?;
            if s.tokens().iter().any(|&t| vocab.is_mask(t)) {
                return Err(GiddError::Dataset(
                    "dataset contains the mask symbol".into(),
                ));
            }
        }
        Ok(())
    }

    /// Shannon entropy of the sequence distribution, in nats.
    pub fn entropy(&self) -> f64 {
        self.weights
            .iter()
            .filter(|&&w| w > 0.0)
            .map(|&w| -w * w.ln())
            .sum()
    }

    /// Per-position marginal distributions over clean tokens.
    pub fn position_marginals(&self, vocab: &Vocab) -> Result<Vec<CategoricalVec>> {
        let len = self.seq_len();
        let mut marginals = vec![vec![0.0; vocab.size()]; len];
        for (seq, w) in self.iter() {
            for (i, &t) in seq.tokens().iter().enumerate() {
                marginals[i][t] += w;
            }
        }
        marginals.into_iter().map(CategoricalVec::new).collect()
    }

    /// Draw a sequence index by inverse CDF on `u in [0, 1)`.
    pub fn sample_index(&self, u: f64) -> usize {
        let mut acc = 0.0;
        for (i, &w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                return i;
            }
        }
        self.sequences.len() - 1
    }
}

/// What the oracle's per-position posterior conditions on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Conditioning {
    /// `p(x_i | z)`: the full posterior, including the observed token's own
    /// likelihood factor. The exact backward-sampling posterior.
    Full,
    /// `p(x_i | z_{-i})`: excludes position i's own likelihood factor. This
    /// is the minimizer of the weighted bound: the weighting vector cancels
    /// the `q_lambda(z_i | x_i)` factor, so the loss-optimal prediction
    /// ignores the observed token itself. With this mode the bound is tight
    /// (up to the clamp) and no denoiser can achieve a lower NELBO.
    LeaveOneOut,
}

/// Exact posterior denoiser: enumerates the dataset and weights each clean
/// sequence by the likelihood of the observed noisy sequence.
#[derive(Debug, Clone)]
pub struct BayesOracle {
    data: EnumerableDataset,
    process: NoiseProcess,
    conditioning: Conditioning,
}

impl BayesOracle {
    /// Full-posterior oracle, `p(x_i | z)`.
    pub fn new(data: EnumerableDataset, process: NoiseProcess) -> Result<Self> {
        Self::with_conditioning(data, process, Conditioning::Full)
    }

    /// The bound-optimal oracle, `p(x_i | z_{-i})`.
    pub fn loss_optimal(data: EnumerableDataset, process: NoiseProcess) -> Result<Self> {
        Self::with_conditioning(data, process, Conditioning::LeaveOneOut)
    }

    pub fn with_conditioning(
        data: EnumerableDataset,
        process: NoiseProcess,
        conditioning: Conditioning,
    ) -> Result<Self> {
        data.validate(process.vocab())?;
        Ok(Self {
            data,
            process,
            conditioning,
        })
    }

    pub fn data(&self) -> &EnumerableDataset {
        &self.data
    }

    pub fn conditioning(&self) -> Conditioning {
        self.conditioning
    }
}

impl Denoiser for BayesOracle {
    fn predict(&self, z: &TokenSequence, lambdas: &[LogSnr]) -> Result<DenoiserOutput> {
        let vocab = self.process.vocab();
        if z.len() != self.data.seq_len() {
            return Err(GiddError::Dataset(format!(
                "query length {} does not match dataset length {}",
                z.len(),
                self.data.seq_len()
            )));
        }
        if lambdas.len() != z.len() {
            return Err(GiddError::Estimator(
                "one log-SNR per position required".into(),
            ));
        }
        let len = z.len();
        // likelihood per dataset sequence, with per-position factors kept for
        // the leave-one-out posterior at each position
        let mut factors = vec![vec![0.0; len]; self.data.len()];
        let mut likelihood = vec![0.0; self.data.len()];
        for (k, (seq, w)) in self.data.iter().enumerate() {
            let mut lik = w;
            for i in 0..len {
                let q = self.process.forward_marginal(seq[i], lambdas[i])?;
                let f = q.prob(z[i]);
                factors[k][i] = f;
                lik *= f;
            }
            likelihood[k] = lik;
        }
        let mut positions = Vec::with_capacity(len);
        for i in 0..len {
            let mut post = vec![0.0; vocab.size()];
            let mut total = 0.0;
            for (k, (seq, w)) in self.data.iter().enumerate() {
                // product of likelihood factors excluding position i
                let loo = if factors[k][i] > 0.0 {
                    likelihood[k] / factors[k][i]
                } else {
                    let mut l = w;
                    for (j, &f) in factors[k].iter().enumerate() {
                        if j != i {
                            l *= f;
                        }
                    }
                    l
                };
                if loo == 0.0 {
                    continue;
                }
                let contrib = match self.conditioning {
                    Conditioning::Full => loo * factors[k][i],
                    Conditioning::LeaveOneOut => loo,
                };
                post[seq[i]] += contrib;
                total += contrib;
            }
            if total <= 0.0 {
                return Err(GiddError::Dataset(format!(
                    "observed sequence is impossible under the process at position {i}"
                )));
            }
            for p in post.iter_mut() {
                *p /= total;
            }
            positions.push(CategoricalVec::normalized(post)?);
        }
        DenoiserOutput::new(vocab, positions)
    }
}

//! Denoiser interface and implementations.
//!
//! A denoiser maps a noisy sequence plus per-token log-SNRs to per-position
//! distributions over clean tokens. Three families are provided: an exact
//! Bayes oracle over an enumerable dataset, a trainable tabular model, and
//! fixed baselines.

mod baseline;
mod oracle;
mod tabular;

pub use baseline::{marginals_baseline, uniform_baseline, MarginalsDenoiser, UniformDenoiser};
pub use oracle::{BayesOracle, Conditioning, EnumerableDataset};
pub use tabular::{
    dataset_nelbo, train_tabular, Checkpoint, LaPropState, LossCurve, LossPoint, OptimizerConfig,
    TabularDenoiser, TrainingOptions,
};

use crate::categorical::CategoricalVec;
use crate::error::{GiddError, Result};
use crate::schedule::LogSnr;
use crate::vocab::{TokenSequence, Vocab};

/// Per-position predictions over clean tokens. The mask symbol always carries
/// probability zero and each position is normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserOutput {
    positions: Vec<CategoricalVec>,
}

impl DenoiserOutput {
    pub fn new(vocab: &Vocab, positions: Vec<CategoricalVec>) -> Result<Self> {
        for p in &positions {
            if p.len() != vocab.size() {
                return Err(GiddError::InvalidCategorical(format!(
                    "prediction length {} does not match vocabulary size {}",
                    p.len(),
                    vocab.size()
                )));
            }
            if p.prob(vocab.mask_id()) != 0.0 {
                return Err(GiddError::InvalidCategorical(
                    "prediction assigns mass to the mask symbol".into(),
                ));
            }
        }
        Ok(Self { positions })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn position(&self, i: usize) -> &CategoricalVec {
        &self.positions[i]
    }

    pub fn positions(&self) -> &[CategoricalVec] {
        &self.positions
    }
}

/// Anything that produces per-position clean-token distributions given a
/// noisy sequence and the log-SNR each token currently sits at.
pub trait Denoiser {
    fn predict(&self, z: &TokenSequence, lambdas: &[LogSnr]) -> Result<DenoiserOutput>;
}

impl<T: Denoiser + ?Sized> Denoiser for &T {
    fn predict(&self, z: &TokenSequence, lambdas: &[LogSnr]) -> Result<DenoiserOutput> {
        (**self).predict(z, lambdas)
    }
}

impl<T: Denoiser + ?Sized> Denoiser for Box<T> {
    fn predict(&self, z: &TokenSequence, lambdas: &[LogSnr]) -> Result<DenoiserOutput> {
        (**self).predict(z, lambdas)
    }
}

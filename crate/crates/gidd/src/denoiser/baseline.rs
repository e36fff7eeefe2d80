//! Fixed baseline denoisers used as ordering references in bound tests.

use crate::categorical::CategoricalVec;
use crate::error::Result;
use crate::schedule::LogSnr;
use crate::vocab::{TokenSequence, Vocab};

use super::{Denoiser, DenoiserOutput, EnumerableDataset};

/// Predicts the uniform distribution over non-mask tokens everywhere,
/// ignoring the observation.
#[derive(Debug, Clone)]
pub struct UniformDenoiser {
    vocab: Vocab,
}

impl Denoiser for UniformDenoiser {
    fn predict(&self, z: &TokenSequence, _lambdas: &[LogSnr]) -> Result<DenoiserOutput> {
        let n = self.vocab.size();
        let mut probs = vec![1.0 / (n - 1) as f64; n];
        probs[self.vocab.mask_id()] = 0.0;
        let p = CategoricalVec::new(probs)?;
        DenoiserOutput::new(&self.vocab, vec![p; z.len()])
    }
}

/// Predicts the dataset's per-position marginals, ignoring the observation.
#[derive(Debug, Clone)]
pub struct MarginalsDenoiser {
    vocab: Vocab,
    marginals: Vec<CategoricalVec>,
}

impl Denoiser for MarginalsDenoiser {
    fn predict(&self, z: &TokenSequence, _lambdas: &[LogSnr]) -> Result<DenoiserOutput> {
        let take = z.len().min(self.marginals.len());
        DenoiserOutput::new(&self.vocab, self.marginals[..take].to_vec())
    }
}

pub fn uniform_baseline(vocab: Vocab) -> UniformDenoiser {
    UniformDenoiser { vocab }
}

pub fn marginals_baseline(vocab: Vocab, data: &EnumerableDataset) -> Result<MarginalsDenoiser> {
    Ok(MarginalsDenoiser {
        vocab,
        marginals: data.position_marginals(&vocab)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_prediction() {
        let vocab = Vocab::new(4, 3).unwrap();
        let d = uniform_baseline(vocab);
        let out = d
            .predict(&TokenSequence::new(vec![0, 3]), &[LogSnr(0.0), LogSnr(0.0)])
            .unwrap();
        for i in 0..2 {
            for t in 0..3 {
                assert!((out.position(i).prob(t) - 1.0 / 3.0).abs() < 1e-15);
            }
            assert_eq!(out.position(i).prob(3), 0.0);
        }
    }

    #[test]
    fn marginals_of_two_sequences() {
        let vocab = Vocab::new(3, 2).unwrap();
        let data = EnumerableDataset::uniform(vec![
            TokenSequence::new(vec![0, 0]),
            TokenSequence::new(vec![0, 1]),
        ])
        .unwrap();
        let d = marginals_baseline(vocab, &data).unwrap();
        let out = d
            .predict(&TokenSequence::new(vec![2, 2]), &[LogSnr(0.0), LogSnr(0.0)])
            .unwrap();
        assert!((out.position(0).prob(0) - 1.0).abs() < 1e-15);
        assert!((out.position(1).prob(0) - 0.5).abs() < 1e-15);
        assert!((out.position(1).prob(1) - 0.5).abs() < 1e-15);
    }
}

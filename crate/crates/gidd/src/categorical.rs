//! Probability vectors over the vocabulary.

use serde::{Deserialize, Serialize};

use crate::error::{GiddError, Result};

/// Tolerance on the total mass of a [`CategoricalVec`].
pub const SUM_TOL: f64 = 1e-12;

/// Tolerance below which a slightly negative entry is treated as zero dust.
pub const NEG_TOL: f64 = -1e-12;

/// A probability vector: non-negative entries summing to 1 within
/// [`SUM_TOL`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalVec(Vec<f64>);

impl CategoricalVec {
    /// Validate and wrap a probability vector. Entries in `[NEG_TOL, 0)` are
    /// clamped to zero; anything more negative is rejected.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        let mut probs = probs;
        let mut sum = 0.0;
        for p in probs.iter_mut() {
            if !p.is_finite() {
                return Err(GiddError::InvalidCategorical("non-finite entry".into()));
            }
            if *p < 0.0 {
                if *p < NEG_TOL {
                    return Err(GiddError::InvalidCategorical(format!(
                        "negative entry {p}"
                    )));
                }
                *p = 0.0;
            }
            sum += *p;
        }
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(GiddError::InvalidCategorical(format!(
                "entries sum to {sum}, expected 1"
            )));
        }
        Ok(Self(probs))
    }

    /// Normalize an arbitrary non-negative vector to total mass 1.
    pub fn normalized(mut weights: Vec<f64>) -> Result<Self> {
        let mut sum = 0.0;
        for w in weights.iter_mut() {
            if !w.is_finite() {
                return Err(GiddError::InvalidCategorical("non-finite entry".into()));
            }
            if *w < 0.0 {
                if *w < NEG_TOL {
                    return Err(GiddError::InvalidCategorical(format!(
                        "negative entry {w}"
                    )));
                }
                *w = 0.0;
            }
            sum += *w;
        }
        if sum <= 0.0 {
            return Err(GiddError::InvalidCategorical("zero total mass".into()));
        }
        for w in weights.iter_mut() {
            *w /= sum;
        }
        Ok(Self(weights))
    }

    /// One-hot vector of dimension `n` at `index`.
    pub fn one_hot(n: usize, index: usize) -> Result<Self> {
        if index >= n {
            return Err(GiddError::InvalidCategorical(format!(
                "one-hot index {index} out of range {n}"
            )));
        }
        let mut v = vec![0.0; n];
        v[index] = 1.0;
        Ok(Self(v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    /// Probability of outcome `i`.
    pub fn prob(&self, i: usize) -> f64 {
        self.0[i]
    }

    /// Index of the largest entry (lowest index wins ties).
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.0.iter().enumerate() {
            if p > self.0[best] {
                best = i;
            }
        }
        best
    }

    /// Largest entry.
    pub fn max_prob(&self) -> f64 {
        self.0.iter().cloned().fold(0.0, f64::max)
    }

    /// Draw one outcome by inverse-CDF on a uniform variate in `[0, 1)`.
    pub fn sample_with(&self, u: f64) -> usize {
        let mut acc = 0.0;
        for (i, &p) in self.0.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        // Rounding can leave acc marginally below 1; fall back to the last
        // outcome with nonzero mass.
        self.0
            .iter()
            .rposition(|&p| p > 0.0)
            .unwrap_or(self.0.len() - 1)
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.0.iter()
    }
}

impl AsRef<[f64]> for CategoricalVec {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validates_mass_and_sign() {
        assert!(CategoricalVec::new(vec![0.5, 0.5]).is_ok());
        assert!(CategoricalVec::new(vec![0.6, 0.5]).is_err());
        assert!(CategoricalVec::new(vec![1.1, -0.1]).is_err());
        // dust within tolerance is clamped
        let v = CategoricalVec::new(vec![1.0 + 1e-13, -1e-13]).unwrap();
        assert_eq!(v.prob(1), 0.0);
    }

    #[test]
    fn normalizes() {
        let v = CategoricalVec::normalized(vec![2.0, 6.0]).unwrap();
        assert!((v.prob(0) - 0.25).abs() < 1e-15);
        assert!(CategoricalVec::normalized(vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn sampling_respects_support() {
        let v = CategoricalVec::new(vec![0.0, 1.0, 0.0]).unwrap();
        for &u in &[0.0, 0.3, 0.999999] {
            assert_eq!(v.sample_with(u), 1);
        }
        assert_eq!(v.sample_with(1.0 - 1e-16), 1);
    }

    #[test]
    fn argmax_ties_break_low() {
        let v = CategoricalVec::new(vec![0.4, 0.4, 0.2]).unwrap();
        assert_eq!(v.argmax(), 0);
    }
}

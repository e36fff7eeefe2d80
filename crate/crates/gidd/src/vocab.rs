//! Vocabulary and token-sequence types.

use serde::{Deserialize, Serialize};

use crate::error::{GiddError, Result};

/// A categorical alphabet of `size` symbols including one distinguished mask
/// symbol and, optionally, a reserved empty/pad symbol.
///
/// The "uniform" noise target excludes the mask but includes the empty symbol
/// when present: empty tokens are treated as ordinary vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    size: usize,
    mask_id: usize,
    empty_id: Option<usize>,
}

impl Vocab {
    /// Build a vocabulary of `size` symbols with the given mask index.
    pub fn new(size: usize, mask_id: usize) -> Result<Self> {
        Self::with_empty(size, mask_id, None)
    }

    /// Build a vocabulary that also reserves an empty/pad symbol.
    pub fn with_empty(size: usize, mask_id: usize, empty_id: Option<usize>) -> Result<Self> {
        if size < 3 {
            return Err(GiddError::InvalidVocab(format!(
                "size must be at least 3, got {size}"
            )));
        }
        if mask_id >= size {
            return Err(GiddError::InvalidVocab(format!(
                "mask_id {mask_id} out of range for size {size}"
            )));
        }
        if let Some(e) = empty_id {
            if e >= size {
                return Err(GiddError::InvalidVocab(format!(
                    "empty_id {e} out of range for size {size}"
                )));
            }
            if e == mask_id {
                return Err(GiddError::InvalidVocab(
                    "empty_id must differ from mask_id".into(),
                ));
            }
        }
        Ok(Self {
            size,
            mask_id,
            empty_id,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn mask_id(&self) -> usize {
        self.mask_id
    }

    pub fn empty_id(&self) -> Option<usize> {
        self.empty_id
    }

    /// Number of non-mask symbols (the support of the uniform noise vector).
    pub fn noise_support(&self) -> usize {
        self.size - 1
    }

    pub fn is_mask(&self, token: usize) -> bool {
        token == self.mask_id
    }

    /// Validate a token index against this vocabulary.
    pub fn check_token(&self, token: usize) -> Result<()> {
        if token < self.size {
            Ok(())
        } else {
            Err(GiddError::InvalidToken {
                index: token,
                size: self.size,
            })
        }
    }

    /// Iterator over all non-mask token indices.
    pub fn clean_tokens(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.size).filter(move |&t| t != self.mask_id)
    }
}

/// A sequence of token indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenSequence(pub Vec<usize>);

impl TokenSequence {
    pub fn new(tokens: Vec<usize>) -> Self {
        Self(tokens)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn tokens(&self) -> &[usize] {
        &self.0
    }

    /// Validate every index against the vocabulary.
    pub fn validate(&self, vocab: &Vocab) -> Result<()> {
        for &t in &self.0 {
            vocab.check_token(t)?;
        }
        Ok(())
    }
}

impl From<Vec<usize>> for TokenSequence {
    fn from(tokens: Vec<usize>) -> Self {
        Self(tokens)
    }
}

impl std::ops::Index<usize> for TokenSequence {
    type Output = usize;
    fn index(&self, i: usize) -> &usize {
        &self.0[i]
    }
}

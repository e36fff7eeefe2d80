//! Crate-wide error type.

use thiserror::Error;

/// Errors raised by the diffusion core.
#[derive(Debug, Error)]
pub enum GiddError {
    /// A log-SNR value fell outside the schedule's clamp range.
    #[error("log-SNR {lambda} outside clamp range [{min}, {max}]")]
    LambdaOutOfRange { lambda: f64, min: f64, max: f64 },

    /// A conditional transition was requested with non-decreasing SNR ordering.
    #[error("transition requires lambda_s > lambda_t, got lambda_s={lambda_s}, lambda_t={lambda_t}")]
    TransitionOrdering { lambda_s: f64, lambda_t: f64 },

    /// Schedule parameters produced an invalid (negative) probability.
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    /// A token index was out of vocabulary bounds.
    #[error("token index {index} out of range for vocabulary of size {size}")]
    InvalidToken { index: usize, size: usize },

    /// Vocabulary construction failed an invariant.
    #[error("invalid vocabulary: {0}")]
    InvalidVocab(String),

    /// A probability vector failed validation.
    #[error("invalid categorical vector: {0}")]
    InvalidCategorical(String),

    /// Divergence evaluated outside its domain (e.g. KL support violation).
    #[error("divergence domain error: {0}")]
    Divergence(String),

    /// An ELBO weight was requested at a zero-probability coordinate.
    #[error("undefined ELBO weight: q_lambda(x) is zero at z={z}")]
    UndefinedWeight { z: usize },

    /// Estimator misuse (empty input, improper density, count mismatch).
    #[error("estimator error: {0}")]
    Estimator(String),

    /// A dataset failed validation or an oracle query was impossible.
    #[error("dataset error: {0}")]
    Dataset(String),

    /// Training diverged or was misconfigured.
    #[error("training error at step {step}: {message}")]
    Training { step: usize, message: String },

    /// Sampler state or schedule was invalid.
    #[error("sampler error: {0}")]
    Sampler(String),
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, GiddError>;

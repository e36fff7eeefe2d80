//! Interpolating discrete diffusion over categorical data, parameterized by
//! log-SNR.
//!
//! The forward process interpolates clean tokens toward a hybrid mixing
//! distribution (a sigmoid blend of masking and uniform noise), with every
//! quantity indexed by the log signal-to-noise ratio instead of time. On top
//! of that sit the reparameterized likelihood bound with Monte Carlo and
//! quadrature estimators, an exact Bayes-oracle denoiser over enumerable
//! datasets, a trainable tabular denoiser, and ancestral plus
//! confidence-based adaptive samplers.

pub mod categorical;
pub mod denoiser;
pub mod elbo;
pub mod error;
pub mod math;
pub mod process;
pub mod sampler;
pub mod schedule;
pub mod vocab;

pub use categorical::CategoricalVec;
pub use denoiser::{
    BayesOracle, Denoiser, DenoiserOutput, EnumerableDataset, TabularDenoiser,
};
pub use elbo::{
    nelbo_monte_carlo, nelbo_quadrature, surrogate_loss, ElboEstimate, LambdaDistribution,
    LambdaKind,
};
pub use error::{GiddError, Result};
pub use process::NoiseProcess;
pub use sampler::{adaptive_sample, ancestral_sample, backward_posterior, DenoiseSchedule};
pub use schedule::{LogSnr, MixingSchedule};
pub use vocab::{TokenSequence, Vocab};

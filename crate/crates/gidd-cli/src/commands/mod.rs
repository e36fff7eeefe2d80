pub mod elbo;
pub mod fit_hparams;
pub mod fit_hyperbola;
pub mod fit_scaling;
pub mod plan;
pub mod sample;
pub mod train_toy;
pub mod validate;

use std::path::Path;

use gidd::denoiser::{
    marginals_baseline, uniform_baseline, BayesOracle, Checkpoint, EnumerableDataset,
};
use gidd::{Denoiser, NoiseProcess, Vocab};

use crate::CliError;

/// Resolve `--denoiser` into an implementation: `oracle` (full posterior),
/// `oracle-loo` (leave-one-out posterior, the bound minimizer), `uniform`,
/// `marginals`, or a path to a tabular checkpoint.
pub fn build_denoiser(
    kind: &str,
    vocab: Vocab,
    data: &EnumerableDataset,
    process: &NoiseProcess,
) -> Result<Box<dyn Denoiser>, CliError> {
    match kind {
        "oracle" => Ok(Box::new(
            BayesOracle::new(data.clone(), *process).map_err(CliError::from)?,
        )),
        "oracle-loo" => Ok(Box::new(
            BayesOracle::loss_optimal(data.clone(), *process).map_err(CliError::from)?,
        )),
        "uniform" => Ok(Box::new(uniform_baseline(vocab))),
        "marginals" => Ok(Box::new(
            marginals_baseline(vocab, data).map_err(CliError::from)?,
        )),
        path => {
            let text = std::fs::read_to_string(Path::new(path)).map_err(|e| {
                CliError::validation(format!(
                    "denoiser {path:?} is not a known kind (oracle, uniform, marginals) and could not be read as a checkpoint: {e}"
                ))
            })?;
            let ckpt: Checkpoint = serde_json::from_str(&text)
                .map_err(|e| CliError::validation(format!("{path}: {e}")))?;
            if ckpt.schema_version != Checkpoint::SCHEMA_VERSION {
                return Err(CliError::validation(format!(
                    "{path}: unsupported checkpoint schema version {}",
                    ckpt.schema_version
                )));
            }
            if ckpt.model.process() != process {
                return Err(CliError::validation(format!(
                    "{path}: checkpoint was trained under a different noise process ({:?})",
                    ckpt.model.process().schedule()
                )));
            }
            Ok(Box::new(ckpt.model))
        }
    }
}

/// Derive a per-item seed from the base seed and an index.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    base ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

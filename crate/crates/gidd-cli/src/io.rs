//! Output envelopes, input digests, atomic writes, and dataset loading.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use gidd::{EnumerableDataset, TokenSequence, Vocab};

use crate::CliError;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "GIDD_OUT_DIR";

/// Standard wrapper around every JSON artifact: schema version, producing
/// command, seed, and digests of the inputs it was computed from.
#[derive(Debug, Serialize)]
pub struct Envelope<T: Serialize> {
    pub schema_version: u32,
    pub command: String,
    pub seed: u64,
    pub inputs: BTreeMap<String, String>,
    pub result: T,
}

impl<T: Serialize> Envelope<T> {
    pub fn new(command: &str, seed: u64, result: T) -> Self {
        Self {
            schema_version: 1,
            command: command.to_string(),
            seed,
            inputs: BTreeMap::new(),
            result,
        }
    }

    pub fn with_input(mut self, path: &Path) -> Result<Self, CliError> {
        let bytes = std::fs::read(path)
            .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
        let mut hasher = Sha256::new();
        hasher.update(&bytes);
        self.inputs.insert(
            path.display().to_string(),
            format!("sha256:{:x}", hasher.finalize()),
        );
        Ok(self)
    }

    pub fn to_json(&self) -> Result<String, CliError> {
        let mut s = serde_json::to_string_pretty(self)
            .map_err(|e| CliError::numeric(format!("serialize: {e}")))?;
        s.push('\n');
        Ok(s)
    }
}

/// Resolve an output path against `GIDD_OUT_DIR` when relative.
pub fn resolve_out(path: &Path) -> PathBuf {
    if path.is_absolute() {
        return path.to_path_buf();
    }
    match std::env::var_os(OUT_DIR_ENV) {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir).join(path),
        _ => path.to_path_buf(),
    }
}

/// Write bytes atomically (temp file + rename).
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let path = resolve_out(path);
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| CliError::validation(format!("{}: {e}", parent.display())))?;
        }
    }
    let tmp = path.with_extension("tmp~");
    std::fs::write(&tmp, bytes)
        .map_err(|e| CliError::validation(format!("{}: {e}", tmp.display())))?;
    std::fs::rename(&tmp, &path)
        .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
    Ok(())
}

/// Emit an artifact to `--out` or stdout.
pub fn emit(out: Option<&Path>, payload: &str) -> Result<(), CliError> {
    match out {
        Some(path) => write_atomic(path, payload.as_bytes()),
        None => {
            print!("{payload}");
            Ok(())
        }
    }
}

/// On-disk dataset description consumed by `elbo`, `sample`, and
/// `train-toy`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetFile {
    pub schema_version: u32,
    pub vocab: VocabFile,
    pub sequences: Vec<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct VocabFile {
    pub size: usize,
    pub mask_id: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub empty_id: Option<usize>,
}

pub fn load_dataset(path: &Path) -> Result<(Vocab, EnumerableDataset), CliError> {
    let json = std::fs::read_to_string(path)
        .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
    let file: DatasetFile = serde_json::from_str(&json)
        .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
    if file.schema_version != 1 {
        return Err(CliError::validation(format!(
            "unsupported dataset schema version {}",
            file.schema_version
        )));
    }
    let vocab = Vocab::with_empty(file.vocab.size, file.vocab.mask_id, file.vocab.empty_id)
        .map_err(|e| CliError::validation(e.to_string()))?;
    let sequences: Vec<TokenSequence> = file.sequences.into_iter().map(TokenSequence::new).collect();
    let data = match file.weights {
        Some(w) => EnumerableDataset::new(sequences, w),
        None => EnumerableDataset::uniform(sequences),
    }
    .map_err(|e| CliError::validation(e.to_string()))?;
    data.validate(&vocab)
        .map_err(|e| CliError::validation(e.to_string()))?;
    Ok((vocab, data))
}

/// Parse a comma-separated list of floats.
pub fn parse_f64_list(s: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|e| CliError::validation(format!("bad number {p:?}: {e}")))
        })
        .collect()
}

/// Parse a comma-separated list of non-negative integers.
pub fn parse_usize_list(s: &str) -> Result<Vec<usize>, CliError> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .map_err(|e| CliError::validation(format!("bad integer {p:?}: {e}")))
        })
        .collect()
}

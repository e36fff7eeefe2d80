//! Run-record schema, loss-curve ingestion and validation, and FLOP
//! accounting under both per-token approximations.

use std::collections::BTreeSet;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, ScalingError};

/// Current on-disk schema version of run records.
pub const RUN_SCHEMA_VERSION: u32 = 1;

/// Architecture description of one trained model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ModelSpec {
    pub layers: u32,
    pub hidden: u32,
    pub heads: u32,
    pub seq_len: u32,
    pub params_nonemb: u64,
    pub vocab_size: u64,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0
            || self.hidden == 0
            || self.heads == 0
            || self.seq_len == 0
            || self.params_nonemb == 0
            || self.vocab_size == 0
        {
            return Err(ScalingError::Validation(format!(
                "model spec fields must be positive: {self:?}"
            )));
        }
        Ok(())
    }

    /// Short human label, e.g. `L8-D512`.
    pub fn label(&self) -> String {
        format!("L{}-D{}", self.layers, self.hidden)
    }
}

/// FLOPs-per-token approximation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FlopMethod {
    /// `6P + 12 * layers * hidden * seq_len`.
    Method1,
    /// `6P`.
    Method2,
}

impl FlopMethod {
    pub fn name(&self) -> &'static str {
        match self {
            FlopMethod::Method1 => "method1",
            FlopMethod::Method2 => "method2",
        }
    }
}

impl std::str::FromStr for FlopMethod {
    type Err = ScalingError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1" | "method1" => Ok(FlopMethod::Method1),
            "2" | "method2" => Ok(FlopMethod::Method2),
            other => Err(ScalingError::Validation(format!(
                "unknown FLOP method {other:?} (expected method1 or method2)"
            ))),
        }
    }
}

/// FLOPs per token of a model under the chosen approximation.
pub fn flops_per_token(model: &ModelSpec, method: FlopMethod) -> f64 {
    let p = 6.0 * model.params_nonemb as f64;
    match method {
        FlopMethod::Method1 => {
            p + 12.0 * model.layers as f64 * model.hidden as f64 * model.seq_len as f64
        }
        FlopMethod::Method2 => p,
    }
}

/// One logged loss observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunPoint {
    pub step: u64,
    pub tokens: u64,
    /// Validation NELBO, nats per token.
    pub loss: f64,
}

/// One training run: configuration plus its loss curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema_version: u32,
    pub model: ModelSpec,
    /// Mixing-distribution shift of the noise type.
    pub noise_b: f64,
    pub batch_size_seqs: u64,
    pub lr_base: f64,
    #[serde(default)]
    pub annealed: bool,
    pub points: Vec<RunPoint>,
    /// Optional surrogate-loss series parallel to `points`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surrogate: Option<Vec<f64>>,
}

impl RunRecord {
    pub fn new(
        model: ModelSpec,
        noise_b: f64,
        batch_size_seqs: u64,
        lr_base: f64,
        points: Vec<RunPoint>,
    ) -> Self {
        Self {
            schema_version: RUN_SCHEMA_VERSION,
            model,
            noise_b,
            batch_size_seqs,
            lr_base,
            annealed: false,
            points,
            surrogate: None,
        }
    }

    /// Configuration key used for duplicate detection and best-config
    /// selection.
    pub fn config_key(&self) -> (ModelSpec, u64, u64, u64) {
        (
            self.model,
            self.batch_size_seqs,
            self.lr_base.to_bits(),
            self.noise_b.to_bits(),
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != RUN_SCHEMA_VERSION {
            return Err(ScalingError::Validation(format!(
                "unsupported schema version {} (expected {RUN_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.model.validate()?;
        if self.batch_size_seqs == 0 {
            return Err(ScalingError::Validation("batch size must be positive".into()));
        }
        if !(self.lr_base > 0.0) {
            return Err(ScalingError::Validation("learning rate must be positive".into()));
        }
        if !self.noise_b.is_finite() {
            return Err(ScalingError::Validation("noise shift must be finite".into()));
        }
        if self.points.is_empty() {
            return Err(ScalingError::Validation("run has no points".into()));
        }
        let tokens_per_step = self.batch_size_seqs * self.model.seq_len as u64;
        let mut prev_step = None;
        for (i, p) in self.points.iter().enumerate() {
            if let Some(prev) = prev_step {
                if p.step <= prev {
                    return Err(ScalingError::Validation(format!(
                        "steps must be strictly increasing at point {i} (step {} after {prev})",
                        p.step
                    )));
                }
            }
            prev_step = Some(p.step);
            let expect = p.step * tokens_per_step;
            if p.tokens.abs_diff(expect) > 1 {
                return Err(ScalingError::Validation(format!(
                    "point {i}: tokens {} inconsistent with step {} x batch {} x seq_len {}",
                    p.tokens, p.step, self.batch_size_seqs, self.model.seq_len
                )));
            }
            if !p.loss.is_finite() || p.loss <= 0.0 {
                return Err(ScalingError::Validation(format!(
                    "point {i}: loss {} must be finite and positive",
                    p.loss
                )));
            }
        }
        if let Some(s) = &self.surrogate {
            if s.len() != self.points.len() {
                return Err(ScalingError::Validation(
                    "surrogate series length differs from points".into(),
                ));
            }
            if s.iter().any(|v| !v.is_finite()) {
                return Err(ScalingError::Validation(
                    "surrogate series contains non-finite values".into(),
                ));
            }
        }
        Ok(())
    }

    /// Cumulative FLOPs at a logged step.
    pub fn cumulative_flops(&self, at_step: u64, method: FlopMethod) -> Result<f64> {
        if at_step == 0 {
            return Ok(0.0);
        }
        let point = self
            .points
            .iter()
            .find(|p| p.step == at_step)
            .ok_or_else(|| {
                ScalingError::Validation(format!("step {at_step} not present in the record"))
            })?;
        Ok(flops_per_token(&self.model, method) * point.tokens as f64)
    }
}

/// Validate a batch of records and reject duplicate configurations.
pub fn validate_runs(runs: &[RunRecord]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for (i, run) in runs.iter().enumerate() {
        run.validate()
            .map_err(|e| ScalingError::Validation(format!("run {i}: {e}")))?;
        if !seen.insert(run.config_key()) {
            return Err(ScalingError::Validation(format!(
                "run {i}: duplicate configuration (model {}, B={}, lr={}, b={})",
                run.model.label(),
                run.batch_size_seqs,
                run.lr_base,
                run.noise_b
            )));
        }
    }
    Ok(())
}

/// Load newline-delimited JSON records; malformed lines are reported with
/// their line number.
pub fn load_runs_jsonl(path: &Path) -> Result<Vec<RunRecord>> {
    let file = std::fs::File::open(path)
        .map_err(|e| ScalingError::Load(format!("{}: {e}", path.display())))?;
    let reader = BufReader::new(file);
    let mut runs = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| ScalingError::Load(format!("line {}: {e}", lineno + 1)))?;
        if line.trim().is_empty() {
            continue;
        }
        let run: RunRecord = serde_json::from_str(&line)
            .map_err(|e| ScalingError::Load(format!("line {}: {e}", lineno + 1)))?;
        run.validate()
            .map_err(|e| ScalingError::Validation(format!("line {}: {e}", lineno + 1)))?;
        runs.push(run);
    }
    validate_runs(&runs)?;
    Ok(runs)
}

/// Write records as newline-delimited JSON.
pub fn save_runs_jsonl(path: &Path, runs: &[RunRecord]) -> Result<()> {
    let mut out = Vec::new();
    for run in runs {
        serde_json::to_writer(&mut out, run)
            .map_err(|e| ScalingError::Load(format!("serialize: {e}")))?;
        out.push(b'\n');
    }
    std::fs::write(path, out).map_err(|e| ScalingError::Load(format!("{}: {e}", path.display())))
}

/// Manifest sidecar for the flat CSV format: per-run configuration keyed by
/// run id.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunsManifest {
    pub schema_version: u32,
    pub runs: std::collections::BTreeMap<String, ManifestEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub model: ModelSpec,
    pub noise_b: f64,
    pub batch_size_seqs: u64,
    pub lr_base: f64,
    #[serde(default)]
    pub annealed: bool,
}

/// Load a flat `(run_id, step, tokens, loss)` CSV joined with its manifest.
pub fn load_runs_csv(csv_path: &Path, manifest_path: &Path) -> Result<Vec<RunRecord>> {
    let manifest: RunsManifest = serde_json::from_str(
        &std::fs::read_to_string(manifest_path)
            .map_err(|e| ScalingError::Load(format!("{}: {e}", manifest_path.display())))?,
    )
    .map_err(|e| ScalingError::Load(format!("{}: {e}", manifest_path.display())))?;
    if manifest.schema_version != RUN_SCHEMA_VERSION {
        return Err(ScalingError::Validation(format!(
            "unsupported manifest schema version {}",
            manifest.schema_version
        )));
    }
    let file = std::fs::File::open(csv_path)
        .map_err(|e| ScalingError::Load(format!("{}: {e}", csv_path.display())))?;
    let reader = BufReader::new(file);
    let mut by_id: std::collections::BTreeMap<String, Vec<RunPoint>> =
        std::collections::BTreeMap::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| ScalingError::Load(format!("line {}: {e}", lineno + 1)))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || (lineno == 0 && trimmed.starts_with("run_id")) {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != 4 {
            return Err(ScalingError::Load(format!(
                "line {}: expected 4 fields, got {}",
                lineno + 1,
                fields.len()
            )));
        }
        let parse = |s: &str, what: &str| -> Result<f64> {
            s.trim().parse::<f64>().map_err(|e| {
                ScalingError::Load(format!("line {}: bad {what} {s:?}: {e}", lineno + 1))
            })
        };
        let step = parse(fields[1], "step")? as u64;
        let tokens = parse(fields[2], "tokens")? as u64;
        let loss = parse(fields[3], "loss")?;
        by_id
            .entry(fields[0].trim().to_string())
            .or_default()
            .push(RunPoint { step, tokens, loss });
    }
    let mut runs = Vec::new();
    for (id, points) in by_id {
        let entry = manifest.runs.get(&id).ok_or_else(|| {
            ScalingError::Validation(format!("run id {id:?} missing from manifest"))
        })?;
        let mut run = RunRecord::new(
            entry.model,
            entry.noise_b,
            entry.batch_size_seqs,
            entry.lr_base,
            points,
        );
        run.annealed = entry.annealed;
        run.validate()
            .map_err(|e| ScalingError::Validation(format!("run {id:?}: {e}")))?;
        runs.push(run);
    }
    validate_runs(&runs)?;
    Ok(runs)
}

/// Atomically write a byte payload (temp file + rename).
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp~");
    std::fs::write(&tmp, bytes)
        .map_err(|e| ScalingError::Load(format!("{}: {e}", tmp.display())))?;
    std::fs::rename(&tmp, path)
        .map_err(|e| ScalingError::Load(format!("{}: {e}", path.display())))?;
    let _ = std::fs::File::open(path).and_then(|f| f.sync_all());
    Ok(())
}

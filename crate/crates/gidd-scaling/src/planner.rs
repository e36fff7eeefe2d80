//! Run planning: turn fitted laws plus a FLOP budget into a concrete
//! training configuration (model size, tokens, batch, learning rates,
//! optimizer settings, predicted loss).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Result, ScalingError};
use crate::hparams::{anneal_adjust, completep_lrs, AnnealedLoss, CompletePRules, GroupSettings};
use crate::isoflop::PointSource;
use crate::runs::{flops_per_token, FlopMethod, ModelSpec};

/// Default nats-per-token to bits-per-byte conversion of the reference
/// tokenizer.
pub const BPB_PER_NAT: f64 = 0.34124;

/// Coefficients of a fitted law `y = A x^alpha + E`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LawEntry {
    pub a: f64,
    pub alpha: f64,
    #[serde(default)]
    pub e: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_squared: Option<f64>,
    /// Where the numbers come from (reported vs. fitted vs. approximate).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

impl LawEntry {
    pub fn evaluate(&self, x: f64) -> f64 {
        self.a * x.powf(self.alpha) + self.e
    }
}

/// A power law pinned at an anchor point: `y = anchor_y (x/anchor_x)^exp`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchoredLaw {
    pub exponent: f64,
    pub anchor_x: f64,
    pub anchor_y: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

impl AnchoredLaw {
    pub fn evaluate(&self, x: f64) -> f64 {
        self.anchor_y * (x / self.anchor_x).powf(self.exponent)
    }
}

/// Second-moment decay policy: smaller beta2 from a batch-size threshold up.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Beta2Policy {
    pub default_value: f64,
    pub large_batch_value: f64,
    pub threshold_seqs: u64,
}

impl Default for Beta2Policy {
    fn default() -> Self {
        Self {
            default_value: 0.99,
            large_batch_value: 0.98,
            threshold_seqs: 256,
        }
    }
}

impl Beta2Policy {
    pub fn beta2_for(&self, batch_seqs: u64) -> f64 {
        if batch_seqs >= self.threshold_seqs {
            self.large_batch_value
        } else {
            self.default_value
        }
    }
}

/// Everything the planner needs for one (noise, method, smoothing) slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerLaws {
    pub noise: String,
    pub method: FlopMethod,
    pub smoothing: PointSource,
    /// `L*(C)`, nats per token.
    pub loss: LawEntry,
    /// `M*(C)`, FLOPs per token.
    pub flops_per_token: LawEntry,
    /// `D*(C)` diagnostics; the plan itself uses `D* = C / M*`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<LawEntry>,
    /// `P*(C)` diagnostics.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<LawEntry>,
    /// `B*(D)` in tokens.
    pub batch: AnchoredLaw,
    /// `eta_base(B)` with `B` in tokens.
    pub lr: AnchoredLaw,
    #[serde(default = "default_bpb")]
    pub bpb_per_nat: f64,
}

fn default_bpb() -> f64 {
    BPB_PER_NAT
}

/// Suggested architecture for a planned model size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchSuggestion {
    pub label: String,
    pub spec: ModelSpec,
    pub flops_per_token: f64,
}

/// A planned training configuration for a FLOP budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    pub budget_c: f64,
    pub noise: String,
    pub method: String,
    pub smoothing: String,
    /// Compute-optimal FLOPs per token.
    pub m_star: f64,
    /// Training tokens, `C / M*`.
    pub d_star: f64,
    /// Non-embedding parameters via FLOP-formula inversion.
    pub p_star: f64,
    /// Predicted loss, nats per token.
    pub loss_star: f64,
    pub loss_bpb: f64,
    pub annealed: AnnealedLoss,
    pub architecture: ArchSuggestion,
    pub batch_tokens: f64,
    pub batch_seqs: f64,
    pub batch_seqs_rounded: u64,
    pub eta_base: f64,
    pub groups: GroupSettings,
    pub beta2: f64,
    pub law_sources: BTreeMap<String, String>,
}

/// Plan a training run at budget `c` from fitted laws. The architecture grid
/// supplies candidate shapes; the nearest shape (in log FLOPs-per-token) is
/// suggested and used for the per-group settings and the parameter-count
/// inversion.
pub fn plan_run(
    c: f64,
    laws: &PlannerLaws,
    rules: &CompletePRules,
    beta2: &Beta2Policy,
    arch_grid: &[ModelSpec],
    seq_len_ref: u32,
) -> Result<PlanResult> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(ScalingError::Planner(format!("budget must be positive, got {c}")));
    }
    if arch_grid.is_empty() {
        return Err(ScalingError::Planner("architecture grid is empty".into()));
    }
    if seq_len_ref == 0 {
        return Err(ScalingError::Planner("reference sequence length must be positive".into()));
    }
    let m_star = laws.flops_per_token.evaluate(c);
    if !(m_star > 0.0) {
        return Err(ScalingError::Planner(format!(
            "model-size law produced non-positive M* = {m_star}"
        )));
    }
    let d_star = c / m_star;
    let loss_star = laws.loss.evaluate(c);
    if !(loss_star > 0.0) {
        return Err(ScalingError::Planner(format!(
            "loss law produced non-positive L* = {loss_star}"
        )));
    }

    // nearest shape in log FLOPs-per-token
    let arch = arch_grid
        .iter()
        .min_by(|a, b| {
            let da = (flops_per_token(a, laws.method).ln() - m_star.ln()).abs();
            let db = (flops_per_token(b, laws.method).ln() - m_star.ln()).abs();
            da.partial_cmp(&db).unwrap()
        })
        .expect("non-empty grid");
    let arch_m = flops_per_token(arch, laws.method);

    let p_star = match laws.method {
        FlopMethod::Method2 => m_star / 6.0,
        FlopMethod::Method1 => {
            let attn =
                12.0 * arch.layers as f64 * arch.hidden as f64 * arch.seq_len as f64;
            let p = (m_star - attn) / 6.0;
            if !(p > 0.0) {
                return Err(ScalingError::Planner(format!(
                    "FLOP-formula inversion failed: M* = {m_star} below the attention term {attn} of shape {}",
                    arch.label()
                )));
            }
            p
        }
    };

    let batch_tokens = laws.batch.evaluate(d_star);
    let batch_seqs = batch_tokens / seq_len_ref as f64;
    let batch_seqs_rounded = batch_seqs.round().max(1.0) as u64;
    let eta_base = laws.lr.evaluate(batch_tokens);
    let groups = completep_lrs(rules, arch.hidden, arch.layers, eta_base)?;
    let annealed = anneal_adjust(loss_star)?;

    let mut law_sources = BTreeMap::new();
    for (name, src) in [
        ("loss", laws.loss.source.as_ref()),
        ("flops_per_token", laws.flops_per_token.source.as_ref()),
        ("batch", laws.batch.source.as_ref()),
        ("lr", laws.lr.source.as_ref()),
    ] {
        if let Some(s) = src {
            law_sources.insert(name.to_string(), s.clone());
        }
    }

    Ok(PlanResult {
        budget_c: c,
        noise: laws.noise.clone(),
        method: laws.method.name().to_string(),
        smoothing: laws.smoothing.name().to_string(),
        m_star,
        d_star,
        p_star,
        loss_star,
        loss_bpb: laws.bpb_per_nat * loss_star,
        annealed,
        architecture: ArchSuggestion {
            label: arch.label(),
            spec: *arch,
            flops_per_token: arch_m,
        },
        batch_tokens,
        batch_seqs,
        batch_seqs_rounded,
        eta_base,
        groups,
        beta2: beta2.beta2_for(batch_seqs_rounded),
        law_sources,
    })
}

// ---------------------------------------------------------------------------
// Law fixtures: published coefficients loadable from JSON.
// ---------------------------------------------------------------------------

/// Laws for the four compute-optimal quantities under one
/// (method, smoothing) slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantityLaws {
    pub loss: LawEntry,
    pub tokens: LawEntry,
    pub flops_per_token: LawEntry,
    pub params: LawEntry,
    /// With-intercept variants (`A C^alpha + E`) when available.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub with_intercept: Option<InterceptLaws>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterceptLaws {
    pub loss: LawEntry,
    pub tokens: LawEntry,
    pub flops_per_token: LawEntry,
    pub params: LawEntry,
}

/// Headline exponent with its bootstrap confidence interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentEntry {
    pub value: f64,
    pub ci_minus: f64,
    pub ci_plus: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseExponents {
    pub alpha_m: ExponentEntry,
    pub alpha_d: ExponentEntry,
    pub alpha_l: ExponentEntry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureConstants {
    pub anneal_improvement: f64,
    pub anneal_improvement_ci99: f64,
    pub bpb_per_nat: f64,
    pub beta2_default: f64,
    pub beta2_large_batch: f64,
    pub beta2_threshold_seqs: u64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub noise_shifts: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeFixture {
    pub label: String,
    #[serde(flatten)]
    pub spec: ModelSpec,
}

/// The bundled coefficient tables: compute laws per noise type, method, and
/// smoothing, headline exponents with intervals, hyperparameter laws, and
/// global constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LawFixtures {
    pub schema_version: u32,
    pub description: String,
    /// noise -> method name -> smoothing name -> laws
    pub compute_laws: BTreeMap<String, BTreeMap<String, BTreeMap<String, QuantityLaws>>>,
    pub exponent_summary: BTreeMap<String, NoiseExponents>,
    pub batch_law: AnchoredLaw,
    pub lr_law: AnchoredLaw,
    pub constants: FixtureConstants,
    pub model_shapes: Vec<ShapeFixture>,
}

impl LawFixtures {
    pub fn from_json(json: &str) -> Result<Self> {
        let f: LawFixtures = serde_json::from_str(json)
            .map_err(|e| ScalingError::Load(format!("law fixtures: {e}")))?;
        if f.schema_version != 1 {
            return Err(ScalingError::Validation(format!(
                "unsupported fixtures schema version {}",
                f.schema_version
            )));
        }
        Ok(f)
    }

    /// Assemble planner inputs for one (noise, method, smoothing) slice.
    pub fn planner_laws(
        &self,
        noise: &str,
        method: FlopMethod,
        smoothing: PointSource,
    ) -> Result<PlannerLaws> {
        let slice = self
            .compute_laws
            .get(noise)
            .and_then(|m| m.get(method.name()))
            .and_then(|s| s.get(smoothing.name()))
            .ok_or_else(|| {
                ScalingError::Planner(format!(
                    "no laws for noise {noise:?}, {}, {}",
                    method.name(),
                    smoothing.name()
                ))
            })?;
        Ok(PlannerLaws {
            noise: noise.to_string(),
            method,
            smoothing,
            loss: slice.loss.clone(),
            flops_per_token: slice.flops_per_token.clone(),
            tokens: Some(slice.tokens.clone()),
            params: Some(slice.params.clone()),
            batch: self.batch_law.clone(),
            lr: self.lr_law.clone(),
            bpb_per_nat: self.constants.bpb_per_nat,
        })
    }

    pub fn beta2_policy(&self) -> Beta2Policy {
        Beta2Policy {
            default_value: self.constants.beta2_default,
            large_batch_value: self.constants.beta2_large_batch,
            threshold_seqs: self.constants.beta2_threshold_seqs,
        }
    }

    pub fn shapes(&self) -> Vec<ModelSpec> {
        self.model_shapes.iter().map(|s| s.spec).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_laws() -> PlannerLaws {
        PlannerLaws {
            noise: "uniform".into(),
            method: FlopMethod::Method1,
            smoothing: PointSource::SqFit,
            loss: LawEntry {
                a: 31.26171,
                alpha: -0.05219,
                e: 0.0,
                r_squared: None,
                source: Some("reported".into()),
            },
            flops_per_token: LawEntry {
                a: 0.00618,
                alpha: 0.58879,
                e: 0.0,
                r_squared: None,
                source: Some("reported".into()),
            },
            tokens: None,
            params: None,
            batch: AnchoredLaw {
                exponent: 0.82,
                anchor_x: 5e9,
                anchor_y: 131_072.0,
                source: Some("approximate anchor".into()),
            },
            lr: AnchoredLaw {
                exponent: 0.34,
                anchor_x: 131_072.0,
                anchor_y: 0.3,
                source: Some("reported anchor".into()),
            },
            bpb_per_nat: BPB_PER_NAT,
        }
    }

    fn shape_grid() -> Vec<ModelSpec> {
        vec![
            ModelSpec {
                layers: 8,
                hidden: 512,
                heads: 8,
                seq_len: 2048,
                params_nonemb: 25_200_000,
                vocab_size: 131_072,
            },
            ModelSpec {
                layers: 20,
                hidden: 1536,
                heads: 12,
                seq_len: 2048,
                params_nonemb: 566_700_000,
                vocab_size: 131_072,
            },
        ]
    }

    #[test]
    fn reference_budget_reproduces_reported_predictions() {
        let laws = toy_laws();
        let plan = plan_run(
            1e21,
            &laws,
            &CompletePRules::default(),
            &Beta2Policy::default(),
            &shape_grid(),
            2048,
        )
        .unwrap();
        assert!((plan.m_star - 1.43e10).abs() / 1.43e10 < 5e-3, "{}", plan.m_star);
        assert!((plan.loss_star - 2.51).abs() / 2.51 < 5e-3, "{}", plan.loss_star);
        assert!((plan.loss_bpb - 0.855).abs() < 1e-3, "{}", plan.loss_bpb);
        // exact identity by construction
        assert!((plan.m_star * plan.d_star - 1e21).abs() / 1e21 < 1e-9);
        assert!((plan.annealed.value - plan.loss_star * 0.9755).abs() < 1e-12);
        assert_eq!(plan.architecture.label, "L20-D1536");
        assert!(plan.p_star > 0.0);
    }

    #[test]
    fn beta2_policy_threshold() {
        let p = Beta2Policy::default();
        assert_eq!(p.beta2_for(255), 0.99);
        assert_eq!(p.beta2_for(256), 0.98);
        assert_eq!(p.beta2_for(512), 0.98);
    }

    #[test]
    fn planner_is_monotone_in_budget() {
        let laws = toy_laws();
        let rules = CompletePRules::default();
        let policy = Beta2Policy::default();
        let grid = shape_grid();
        let mut prev: Option<PlanResult> = None;
        for exp in 18..27 {
            let plan = plan_run(10f64.powi(exp), &laws, &rules, &policy, &grid, 2048).unwrap();
            if let Some(p) = &prev {
                assert!(plan.m_star > p.m_star);
                assert!(plan.d_star > p.d_star);
                assert!(plan.loss_star < p.loss_star);
                assert!(plan.batch_tokens > p.batch_tokens);
            }
            prev = Some(plan);
        }
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        let laws = toy_laws();
        let rules = CompletePRules::default();
        let policy = Beta2Policy::default();
        assert!(plan_run(-1.0, &laws, &rules, &policy, &shape_grid(), 2048).is_err());
        assert!(plan_run(1e21, &laws, &rules, &policy, &[], 2048).is_err());
        assert!(plan_run(1e21, &laws, &rules, &policy, &shape_grid(), 0).is_err());
    }
}

//! Synthetic loss landscapes with closed-form compute-optimal frontiers,
//! used to validate the fitting pipeline end to end.

use serde::{Deserialize, Serialize};

use crate::error::{Result, ScalingError};
use crate::runs::{flops_per_token, FlopMethod, ModelSpec, RunPoint, RunRecord};

/// A separable loss surface `L(M, D) = E + A M^{-a} + B D^{-b}` over
/// FLOPs-per-token `M` and training tokens `D`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticLandscape {
    pub e: f64,
    pub coef_m: f64,
    pub exp_m: f64,
    pub coef_d: f64,
    pub exp_d: f64,
}

impl SyntheticLandscape {
    pub fn loss(&self, m: f64, d: f64) -> f64 {
        self.e + self.coef_m * m.powf(-self.exp_m) + self.coef_d * d.powf(-self.exp_d)
    }

    /// Exponent of the analytic compute-optimal model-size law,
    /// `alpha_M = b / (a + b)`.
    pub fn alpha_m(&self) -> f64 {
        self.exp_d / (self.exp_m + self.exp_d)
    }

    /// Exponent of the analytic token law, `alpha_D = a / (a + b)`.
    pub fn alpha_d(&self) -> f64 {
        self.exp_m / (self.exp_m + self.exp_d)
    }

    /// Prefactor of the analytic `M*(C)` law.
    pub fn m_star_prefactor(&self) -> f64 {
        let (a, b) = (self.exp_m, self.exp_d);
        ((a * self.coef_m) / (b * self.coef_d)).powf(1.0 / (a + b))
    }

    /// Closed-form compute-optimal model size at budget `c`.
    pub fn m_star(&self, c: f64) -> f64 {
        self.m_star_prefactor() * c.powf(self.alpha_m())
    }

    /// Brute-force optimum over a dense log-spaced grid in `M`; the
    /// independent check of the closed form.
    pub fn brute_force_m_star(&self, c: f64, m_lo: f64, m_hi: f64, n_grid: usize) -> f64 {
        let l0 = m_lo.ln();
        let l1 = m_hi.ln();
        let mut best_m = m_lo;
        let mut best_loss = f64::INFINITY;
        for i in 0..n_grid {
            let m = (l0 + (l1 - l0) * i as f64 / (n_grid - 1) as f64).exp();
            let loss = self.loss(m, c / m);
            if loss < best_loss {
                best_loss = loss;
                best_m = m;
            }
        }
        best_m
    }
}

/// Layout of a generated sweep.
#[derive(Debug, Clone, Copy)]
pub struct SweepConfig {
    pub n_models: usize,
    pub m_lo: f64,
    pub m_hi: f64,
    /// Compute coverage of each run around the budget where its model is
    /// optimal, in decades each side.
    pub coverage_decades: f64,
    pub points_per_run: usize,
    pub seq_len: u32,
    pub batch_size_seqs: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            n_models: 16,
            m_lo: 1e6,
            m_hi: 1e9,
            coverage_decades: 2.0,
            points_per_run: 120,
            seq_len: 128,
            batch_size_seqs: 32,
        }
    }
}

/// A model spec whose FLOPs-per-token under `method` lands near `m_target`.
fn spec_for_m(m_target: f64, index: usize, method: FlopMethod, seq_len: u32) -> ModelSpec {
    match method {
        FlopMethod::Method2 => ModelSpec {
            layers: 2 + index as u32,
            hidden: 32 * (index as u32 + 1),
            heads: 4,
            seq_len,
            params_nonemb: (m_target / 6.0).round().max(1.0) as u64,
            vocab_size: 1000,
        },
        FlopMethod::Method1 => {
            // keep the attention term under half the target so P stays positive
            let mut layers = 2 + index as u32;
            let mut hidden = 32 * (index as u32 + 1);
            while 12.0 * layers as f64 * hidden as f64 * seq_len as f64 > m_target / 2.0 {
                if hidden > 32 {
                    hidden -= 32;
                } else if layers > 2 {
                    layers -= 1;
                } else {
                    break;
                }
            }
            let attn = 12.0 * layers as f64 * hidden as f64 * seq_len as f64;
            ModelSpec {
                layers,
                hidden,
                heads: 4,
                seq_len,
                params_nonemb: ((m_target - attn) / 6.0).round().max(1.0) as u64,
                vocab_size: 1000,
            }
        }
    }
}

/// Generate one noiseless run per model size, each covering the compute
/// window around its own optimal budget.
pub fn generate_runs(
    landscape: &SyntheticLandscape,
    method: FlopMethod,
    cfg: &SweepConfig,
) -> Result<Vec<RunRecord>> {
    if cfg.n_models < 3 || cfg.points_per_run < 8 {
        return Err(ScalingError::Degenerate(
            "sweep needs at least 3 models and 8 points per run".into(),
        ));
    }
    let mut runs = Vec::with_capacity(cfg.n_models);
    let tokens_per_step = cfg.batch_size_seqs * cfg.seq_len as u64;
    for j in 0..cfg.n_models {
        let frac = j as f64 / (cfg.n_models - 1) as f64;
        let m_target = cfg.m_lo * (cfg.m_hi / cfg.m_lo).powf(frac);
        let model = spec_for_m(m_target, j, method, cfg.seq_len);
        let m = flops_per_token(&model, method);
        // budget window where this model is near-optimal
        let c_opt = (m / landscape.m_star_prefactor()).powf(1.0 / landscape.alpha_m());
        let c_lo = c_opt * 10f64.powf(-cfg.coverage_decades);
        let c_hi = c_opt * 10f64.powf(cfg.coverage_decades);
        let mut points: Vec<RunPoint> = Vec::with_capacity(cfg.points_per_run);
        let mut prev_step = 0u64;
        for k in 0..cfg.points_per_run {
            let c = c_lo * (c_hi / c_lo).powf(k as f64 / (cfg.points_per_run - 1) as f64);
            let d = c / m;
            let step = ((d / tokens_per_step as f64).round() as u64).max(prev_step + 1);
            prev_step = step;
            let tokens = step * tokens_per_step;
            points.push(RunPoint {
                step,
                tokens,
                loss: landscape.loss(m, tokens as f64),
            });
        }
        runs.push(RunRecord::new(model, 0.0, cfg.batch_size_seqs, 0.3, points));
    }
    Ok(runs)
}

/// Log-spaced compute targets covered by the interior of a generated sweep.
pub fn interior_targets(
    landscape: &SyntheticLandscape,
    cfg: &SweepConfig,
    n_targets: usize,
) -> Vec<f64> {
    // optimal budgets of the 2nd and (n-2)th models bound the well-covered
    // region
    let frac = |j: usize| j as f64 / (cfg.n_models - 1) as f64;
    let m_at = |j: usize| cfg.m_lo * (cfg.m_hi / cfg.m_lo).powf(frac(j));
    let c_at = |j: usize| {
        (m_at(j) / landscape.m_star_prefactor()).powf(1.0 / landscape.alpha_m())
    };
    let lo = c_at(2);
    let hi = c_at(cfg.n_models - 3);
    (0..n_targets)
        .map(|i| lo * (hi / lo).powf(i as f64 / (n_targets - 1) as f64))
        .collect()
}

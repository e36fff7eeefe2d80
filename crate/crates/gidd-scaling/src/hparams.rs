//! Batch-size and learning-rate laws, width/depth-parameterization rules,
//! and the annealing correction.

use serde::{Deserialize, Serialize};

use crate::error::{Result, ScalingError};
use crate::powerlaw::{FitIntervals, Interval, PowerLawFit};

/// Constant loss improvement contributed by a terminal learning-rate decay
/// phase, with its reported 99% confidence half-width.
pub const ANNEAL_IMPROVEMENT: f64 = 0.0245;
pub const ANNEAL_IMPROVEMENT_CI99: f64 = 0.00138;

/// Log-log OLS with closed-form normal 95% intervals on both coefficients;
/// the form shared by the batch-size and learning-rate laws.
fn loglog_law(xs: &[f64], ys: &[f64]) -> Result<PowerLawFit> {
    if xs.len() != ys.len() || xs.len() < 3 {
        return Err(ScalingError::Degenerate(
            "law fits need at least 3 points".into(),
        ));
    }
    if xs.iter().chain(ys.iter()).any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(ScalingError::Degenerate("data must be positive".into()));
    }
    let n = xs.len() as f64;
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx <= 0.0 {
        return Err(ScalingError::Degenerate("degenerate x-range".into()));
    }
    let sxy: f64 = lx.iter().zip(ly.iter()).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = lx
        .iter()
        .zip(ly.iter())
        .map(|(x, y)| {
            let e = y - (intercept + slope * x);
            e * e
        })
        .sum();
    let ss_tot: f64 = ly.iter().map(|y| (y - my) * (y - my)).sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    // standard errors (sigma^2 estimated with n-2 dof when available)
    let dof = (n - 2.0).max(1.0);
    let sigma2 = ss_res / dof;
    let se_slope = (sigma2 / sxx).sqrt();
    let se_intercept = (sigma2 * (1.0 / n + mx * mx / sxx)).sqrt();
    let z = 1.959963984540054; // 95% normal quantile
    let a = intercept.exp();
    Ok(PowerLawFit {
        a,
        alpha: slope,
        e: 0.0,
        with_intercept: false,
        r_squared: r2,
        n_points: xs.len(),
        ci: Some(FitIntervals {
            a: Interval {
                low: (intercept - z * se_intercept).exp(),
                high: (intercept + z * se_intercept).exp(),
            },
            alpha: Interval {
                low: slope - z * se_slope,
                high: slope + z * se_slope,
            },
            e: Interval { low: 0.0, high: 0.0 },
        }),
    })
}

/// Optimal batch size as a power law of training tokens,
/// `B*(D) = A D^e`.
pub fn fit_batch_law(points: &[(f64, f64)]) -> Result<PowerLawFit> {
    let (d, b): (Vec<f64>, Vec<f64>) = points.iter().copied().unzip();
    loglog_law(&d, &b)
}

/// Optimal base learning rate as a power law of (optimal) batch size,
/// `eta*(B) = A B^e`.
pub fn fit_lr_law(points: &[(f64, f64)]) -> Result<PowerLawFit> {
    let (b, eta): (Vec<f64>, Vec<f64>) = points.iter().copied().unzip();
    loglog_law(&b, &eta)
}

/// Width/depth-transfer rules: base values tuned at a reference batch size
/// and the scaling rules that map them to a concrete (hidden size d, layer
/// count L) shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompletePRules {
    /// Bulk init scale; per-shape init is `sigma_base * d^{-1/2}`.
    pub sigma_base: f64,
    /// Auxiliary (non-width-dependent) init scale, used as-is.
    pub sigma_aux: f64,
    /// Reference base learning rate...
    pub eta_base_ref: f64,
    /// ...tuned at this batch size (sequences).
    pub eta_base_ref_batch: u64,
    /// Auxiliary LR as a fraction of the base LR.
    pub eta_aux_factor: f64,
    /// Optimizer epsilon rule numerator; per-shape eps is `eps_base / (d L)`.
    pub eps_base: f64,
    /// Residual-branch multiplier numerator; per-shape value is `res / L`.
    pub residual_multiplier_base: f64,
    /// Output (readout) multiplier, shape-independent.
    pub output_multiplier: f64,
}

impl Default for CompletePRules {
    fn default() -> Self {
        Self {
            sigma_base: 0.4,
            sigma_aux: 0.02,
            eta_base_ref: 0.3,
            eta_base_ref_batch: 64,
            eta_aux_factor: 0.02,
            eps_base: 1e-8,
            residual_multiplier_base: 4.0,
            output_multiplier: 512.0,
        }
    }
}

/// Concrete per-group settings for one model shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupSettings {
    pub eta_bulk: f64,
    pub eta_aux: f64,
    pub eps: f64,
    pub sigma_bulk: f64,
    pub sigma_aux: f64,
    pub residual_multiplier: f64,
    pub output_multiplier: f64,
}

/// Apply the parameterization rules at hidden size `d`, depth `layers`, and
/// base learning rate `eta_base`:
/// `eta_bulk = eta_base / d`, `eta_aux = 0.02 eta_base`,
/// `eps = 1e-8 / (d L)`, `sigma_bulk = 0.4 d^{-1/2}`.
pub fn completep_lrs(
    rules: &CompletePRules,
    d: u32,
    layers: u32,
    eta_base: f64,
) -> Result<GroupSettings> {
    if d == 0 || layers == 0 || !(eta_base > 0.0) {
        return Err(ScalingError::Planner(format!(
            "need positive d, layers, eta_base; got d={d}, L={layers}, eta={eta_base}"
        )));
    }
    let d = d as f64;
    let l = layers as f64;
    Ok(GroupSettings {
        eta_bulk: eta_base / d,
        eta_aux: rules.eta_aux_factor * eta_base,
        eps: rules.eps_base / (d * l),
        sigma_bulk: rules.sigma_base / d.sqrt(),
        sigma_aux: rules.sigma_aux,
        residual_multiplier: rules.residual_multiplier_base / l,
        output_multiplier: rules.output_multiplier,
    })
}

/// A loss value adjusted for the constant annealing improvement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnealedLoss {
    pub value: f64,
    /// Relative improvement applied.
    pub improvement: f64,
    /// 99% confidence half-width of the improvement.
    pub improvement_ci99: f64,
}

/// Apply the constant annealing improvement: `loss * (1 - 0.0245)`.
pub fn anneal_adjust(loss: f64) -> Result<AnnealedLoss> {
    if !(loss > 0.0) {
        return Err(ScalingError::Planner(format!(
            "annealing adjustment requires a positive loss, got {loss}"
        )));
    }
    Ok(AnnealedLoss {
        value: loss * (1.0 - ANNEAL_IMPROVEMENT),
        improvement: ANNEAL_IMPROVEMENT,
        improvement_ci99: ANNEAL_IMPROVEMENT_CI99,
    })
}

/// Invert [`anneal_adjust`].
pub fn anneal_invert(annealed: f64) -> f64 {
    annealed / (1.0 - ANNEAL_IMPROVEMENT)
}

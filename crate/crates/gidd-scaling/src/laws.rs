//! Compute-optimal frontier estimation from iso-FLOP profiles: per-target
//! optima (raw minimum or parabola vertex) and the four power laws
//! M*(C), D*(C), P*(C), L*(C).

use serde::{Deserialize, Serialize};

use crate::error::{Result, ScalingError};
use crate::isoflop::{extract_isoflop, parabola_optimum, IsoFlopPoint, PointSource};
use crate::powerlaw::{fit_power_law, PowerLawFit};
use crate::runs::{flops_per_token, FlopMethod, RunRecord};

/// Compute-optimal settings at one target budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimalPoint {
    pub c: f64,
    pub m_star: f64,
    pub d_star: f64,
    pub p_star: f64,
    pub loss_star: f64,
    /// Parabola rejected, raw minimum used.
    pub fallback: bool,
}

/// The four fitted laws plus the per-target optima they were fitted on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingLaws {
    pub m_law: PowerLawFit,
    pub d_law: PowerLawFit,
    pub p_law: PowerLawFit,
    pub l_law: PowerLawFit,
    /// `alpha_M + alpha_D`; equals 1 up to fitting error since D* = C / M*.
    pub alpha_sum: f64,
    pub optima: Vec<OptimalPoint>,
    pub method: FlopMethod,
    pub smoothing: PointSource,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// Full iso-FLOP pipeline. Per target: select each model's best
/// configuration, take the optimum over model sizes (raw minimum or parabola
/// vertex in `(log M, loss)`), derive `D* = C / M*` and `P*` from the model
/// family's `(M, P)` relation, then fit all four laws without intercept.
pub fn compute_optimal_laws(
    runs: &[RunRecord],
    targets: &[f64],
    method: FlopMethod,
    smoothing: PointSource,
    window: usize,
) -> Result<ScalingLaws> {
    let distinct_models: std::collections::BTreeSet<_> =
        runs.iter().map(|r| r.model).collect();
    if distinct_models.len() < 3 {
        return Err(ScalingError::Degenerate(format!(
            "need at least 3 model sizes, got {}",
            distinct_models.len()
        )));
    }
    if targets.len() < 4 {
        return Err(ScalingError::Degenerate(format!(
            "need at least 4 targets, got {}",
            targets.len()
        )));
    }
    let extraction = extract_isoflop(runs, targets, method, window)?;
    let mut notes = extraction.skipped.clone();

    // family mapping log P = c0 + c1 log M, exact for the 6P approximation
    let family: Vec<(f64, f64)> = distinct_models
        .iter()
        .map(|m| (flops_per_token(m, method), m.params_nonemb as f64))
        .collect();
    let (fam_m, fam_p): (Vec<f64>, Vec<f64>) = family.iter().copied().unzip();
    let p_line = fit_power_law(&fam_m, &fam_p, false)?;

    let mut optima = Vec::new();
    for &c in targets {
        let pts: Vec<&IsoFlopPoint> = extraction
            .points
            .iter()
            .filter(|p| p.target_c == c)
            .collect();
        if pts.len() < 3 {
            notes.push(format!(
                "target {c:.3e}: only {} model sizes in coverage, skipped",
                pts.len()
            ));
            continue;
        }
        let (m_star, loss_star, p_star, fallback) = match smoothing {
            PointSource::Raw => {
                let best = pts
                    .iter()
                    .min_by(|a, b| a.loss.partial_cmp(&b.loss).unwrap())
                    .expect("non-empty");
                (best.model_m, best.loss, best.params_p, false)
            }
            PointSource::SqFit => {
                let uv: Vec<(f64, f64)> =
                    pts.iter().map(|p| (p.model_m.ln(), p.loss)).collect();
                let opt = parabola_optimum(&uv)?;
                if opt.fallback {
                    notes.push(format!(
                        "target {c:.3e}: parabola rejected, raw minimum used"
                    ));
                }
                (opt.m_opt, opt.loss_opt, p_line.evaluate(opt.m_opt), opt.fallback)
            }
        };
        optima.push(OptimalPoint {
            c,
            m_star,
            d_star: c / m_star,
            p_star,
            loss_star,
            fallback,
        });
    }
    if optima.len() < 4 {
        return Err(ScalingError::Degenerate(format!(
            "only {} usable targets after coverage filtering",
            optima.len()
        )));
    }
    let cs: Vec<f64> = optima.iter().map(|o| o.c).collect();
    let m_law = fit_power_law(&cs, &optima.iter().map(|o| o.m_star).collect::<Vec<_>>(), false)?;
    let d_law = fit_power_law(&cs, &optima.iter().map(|o| o.d_star).collect::<Vec<_>>(), false)?;
    let p_law = fit_power_law(&cs, &optima.iter().map(|o| o.p_star).collect::<Vec<_>>(), false)?;
    let l_law = fit_power_law(&cs, &optima.iter().map(|o| o.loss_star).collect::<Vec<_>>(), false)?;
    let alpha_sum = m_law.alpha + d_law.alpha;
    Ok(ScalingLaws {
        m_law,
        d_law,
        p_law,
        l_law,
        alpha_sum,
        optima,
        method,
        smoothing,
        notes,
    })
}

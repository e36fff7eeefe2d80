//! Iso-FLOP point extraction and parabola smoothing.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::curve::LogCurve;
use crate::error::{Result, ScalingError};
use crate::runs::{flops_per_token, FlopMethod, ModelSpec, RunRecord};

/// How an iso-FLOP optimum was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PointSource {
    /// Best observed value (no smoothing).
    Raw,
    /// Vertex of a parabola fitted over model sizes.
    SqFit,
}

impl PointSource {
    pub fn name(&self) -> &'static str {
        match self {
            PointSource::Raw => "raw",
            PointSource::SqFit => "sq-fit",
        }
    }
}

impl std::str::FromStr for PointSource {
    type Err = ScalingError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(PointSource::Raw),
            "sq-fit" | "sq_fit" | "sqfit" => Ok(PointSource::SqFit),
            other => Err(ScalingError::Validation(format!(
                "unknown smoothing {other:?} (expected raw or sq-fit)"
            ))),
        }
    }
}

/// Loss of one model at one compute target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsoFlopPoint {
    /// Target training compute, non-embedding FLOPs.
    pub target_c: f64,
    /// FLOPs per token of the model.
    pub model_m: f64,
    /// Interpolated loss, nats per token.
    pub loss: f64,
    /// Tokens implied by the target, `C / M`.
    pub tokens_d: f64,
    /// Non-embedding parameters of the model.
    pub params_p: f64,
    pub source: PointSource,
    /// Set when the interpolation degenerated to nearest-neighbor (w = 1).
    pub low_quality: bool,
}

/// Result of scanning runs at a set of compute targets.
#[derive(Debug, Clone, Default)]
pub struct IsoFlopExtraction {
    pub points: Vec<IsoFlopPoint>,
    /// Human-readable notes for (run, target) pairs that were skipped.
    pub skipped: Vec<String>,
}

/// Scan every run's loss curve at the given compute targets. Per (model,
/// target) the best (batch, lr) configuration is selected by lowest
/// interpolated loss; targets outside a run's coverage skip that run.
pub fn extract_isoflop(
    runs: &[RunRecord],
    targets: &[f64],
    method: FlopMethod,
    window: usize,
) -> Result<IsoFlopExtraction> {
    if targets.iter().any(|&t| !(t > 0.0)) {
        return Err(ScalingError::Validation("targets must be positive".into()));
    }
    let mut best: BTreeMap<(ModelSpec, u64), IsoFlopPoint> = BTreeMap::new();
    let mut skipped = Vec::new();
    for run in runs {
        let m = flops_per_token(&run.model, method);
        let cs: Vec<f64> = run.points.iter().map(|p| m * p.tokens as f64).collect();
        let losses: Vec<f64> = run.points.iter().map(|p| p.loss).collect();
        let curve = match LogCurve::new(&cs, &losses) {
            Ok(c) => c,
            Err(e) => {
                skipped.push(format!(
                    "run {} B={} lr={}: {e}",
                    run.model.label(),
                    run.batch_size_seqs,
                    run.lr_base
                ));
                continue;
            }
        };
        for (ti, &target) in targets.iter().enumerate() {
            if !curve.covers(target) {
                skipped.push(format!(
                    "run {} B={} lr={}: target {target:.3e} outside coverage",
                    run.model.label(),
                    run.batch_size_seqs,
                    run.lr_base
                ));
                continue;
            }
            let loss = curve.value_at(target, window)?;
            let candidate = IsoFlopPoint {
                target_c: target,
                model_m: m,
                loss,
                tokens_d: target / m,
                params_p: run.model.params_nonemb as f64,
                source: PointSource::Raw,
                low_quality: window <= 1,
            };
            best.entry((run.model, ti as u64))
                .and_modify(|cur| {
                    if candidate.loss < cur.loss {
                        *cur = candidate;
                    }
                })
                .or_insert(candidate);
        }
    }
    Ok(IsoFlopExtraction {
        points: best.into_values().collect(),
        skipped,
    })
}

/// Vertex of a least-squares parabola in `(log M, loss)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParabolaOptimum {
    pub m_opt: f64,
    pub loss_opt: f64,
    /// True when the quadratic was rejected (concave or degenerate) and the
    /// raw minimum was returned instead.
    pub fallback: bool,
}

/// Fit `loss = c0 + c1 u + c2 u^2` over `u = log M` and return the vertex.
/// Requires three distinct model sizes; concave-down or degenerate fits fall
/// back to the raw minimum with a warning flag.
pub fn parabola_optimum(points: &[(f64, f64)]) -> Result<ParabolaOptimum> {
    let mut us: Vec<f64> = points.iter().map(|p| p.0).collect();
    us.sort_by(|a, b| a.partial_cmp(b).unwrap());
    us.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    if us.len() < 3 {
        return Err(ScalingError::Degenerate(format!(
            "parabola fit needs 3 distinct model sizes, got {}",
            us.len()
        )));
    }
    // center for conditioning
    let mean_u: f64 = points.iter().map(|p| p.0).sum::<f64>() / points.len() as f64;
    let mut s = [[0.0f64; 3]; 3];
    let mut b = [0.0f64; 3];
    for &(u, loss) in points {
        let du = u - mean_u;
        let basis = [1.0, du, du * du];
        for i in 0..3 {
            b[i] += basis[i] * loss;
            for j in 0..3 {
                s[i][j] += basis[i] * basis[j];
            }
        }
    }
    let raw_min = points
        .iter()
        .copied()
        .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .expect("non-empty");
    let coefs = solve3(&s, &b);
    let Some([c0, c1, c2]) = coefs else {
        return Ok(ParabolaOptimum {
            m_opt: raw_min.0.exp(),
            loss_opt: raw_min.1,
            fallback: true,
        });
    };
    if c2 <= 0.0 {
        return Ok(ParabolaOptimum {
            m_opt: raw_min.0.exp(),
            loss_opt: raw_min.1,
            fallback: true,
        });
    }
    let du_opt = -c1 / (2.0 * c2);
    Ok(ParabolaOptimum {
        m_opt: (mean_u + du_opt).exp(),
        loss_opt: c0 - c1 * c1 / (4.0 * c2),
        fallback: false,
    })
}

fn solve3(a: &[[f64; 3]; 3], b: &[f64; 3]) -> Option<[f64; 3]> {
    let mut m = [[0.0f64; 4]; 3];
    for i in 0..3 {
        m[i][..3].copy_from_slice(&a[i]);
        m[i][3] = b[i];
    }
    for col in 0..3 {
        let piv = (col..3).max_by(|&i, &j| {
            m[i][col]
                .abs()
                .partial_cmp(&m[j][col].abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        })?;
        if m[piv][col].abs() < 1e-250 {
            return None;
        }
        m.swap(col, piv);
        for row in 0..3 {
            if row == col {
                continue;
            }
            let f = m[row][col] / m[col][col];
            for k in col..4 {
                m[row][k] -= f * m[col][k];
            }
        }
    }
    Some([m[0][3] / m[0][0], m[1][3] / m[1][1], m[2][3] / m[2][2]])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runs::RunPoint;
    use rand::{Rng, SeedableRng};

    fn spec(layers: u32, hidden: u32, p: u64) -> ModelSpec {
        ModelSpec {
            layers,
            hidden,
            heads: 8,
            seq_len: 128,
            params_nonemb: p,
            vocab_size: 1000,
        }
    }

    fn synthetic_run(model: ModelSpec, b: u64, lr: f64, f: impl Fn(f64) -> f64) -> RunRecord {
        let tokens_per_step = b * model.seq_len as u64;
        let points = (1..=60)
            .map(|i| {
                let step = i * 50;
                let tokens = step * tokens_per_step;
                RunPoint {
                    step,
                    tokens,
                    loss: f(tokens as f64),
                }
            })
            .collect();
        RunRecord::new(model, 0.0, b, lr, points)
    }

    #[test]
    fn gridded_curve_reads_exact_knots() {
        let model = spec(4, 64, 1_000_000);
        let m = flops_per_token(&model, FlopMethod::Method2);
        let run = synthetic_run(model, 8, 0.1, |d| 3.0 * (m * d).powf(-0.05));
        let knot_c = m * run.points[30].tokens as f64;
        let out = extract_isoflop(&[run.clone()], &[knot_c], FlopMethod::Method2, 5).unwrap();
        assert_eq!(out.points.len(), 1);
        assert!((out.points[0].loss - run.points[30].loss).abs() < 1e-9);
        assert!((out.points[0].tokens_d - run.points[30].tokens as f64).abs() < 1.0);
    }

    #[test]
    fn window_one_is_flagged() {
        let model = spec(4, 64, 1_000_000);
        let m = flops_per_token(&model, FlopMethod::Method2);
        let run = synthetic_run(model, 8, 0.1, |d| 3.0 * (m * d).powf(-0.05));
        let target = m * run.points[10].tokens as f64 * 1.01;
        let out = extract_isoflop(&[run], &[target], FlopMethod::Method2, 1).unwrap();
        assert!(out.points[0].low_quality);
    }

    #[test]
    fn out_of_range_targets_are_skipped_with_notes() {
        let model = spec(4, 64, 1_000_000);
        let run = synthetic_run(model, 8, 0.1, |d| 3.0 * d.powf(-0.01));
        let out = extract_isoflop(&[run], &[1e30], FlopMethod::Method2, 5).unwrap();
        assert!(out.points.is_empty());
        assert_eq!(out.skipped.len(), 1);
        assert!(out.skipped[0].contains("outside coverage"));
    }

    #[test]
    fn best_config_selected_per_model_and_target() {
        let model = spec(4, 64, 1_000_000);
        let m = flops_per_token(&model, FlopMethod::Method2);
        let good = synthetic_run(model, 8, 0.2, |d| 2.0 * (m * d).powf(-0.05));
        let bad = synthetic_run(model, 16, 0.4, |d| 3.0 * (m * d).powf(-0.05));
        let target = m * good.points[20].tokens as f64;
        let out = extract_isoflop(&[bad, good.clone()], &[target], FlopMethod::Method2, 5).unwrap();
        assert_eq!(out.points.len(), 1);
        assert!((out.points[0].loss - good.points[20].loss).abs() < 1e-9);
    }

    #[test]
    fn exact_parabola_recovered() {
        // loss = 2 + 0.5 (u - 3)^2 with vertex (3, 2)
        let points: Vec<(f64, f64)> = (0..7)
            .map(|i| {
                let u = i as f64;
                (u, 2.0 + 0.5 * (u - 3.0) * (u - 3.0))
            })
            .collect();
        let opt = parabola_optimum(&points).unwrap();
        assert!(!opt.fallback);
        assert!((opt.m_opt.ln() - 3.0).abs() < 1e-10);
        assert!((opt.loss_opt - 2.0).abs() < 1e-10);
    }

    #[test]
    fn symmetric_v_vertex_at_middle() {
        let points = vec![(1.0, 5.0), (2.0, 1.0), (3.0, 5.0)];
        let opt = parabola_optimum(&points).unwrap();
        assert!((opt.m_opt.ln() - 2.0).abs() < 1e-10);
    }

    #[test]
    fn concave_down_falls_back_to_raw_min() {
        let points = vec![(1.0, 1.0), (2.0, 3.0), (3.0, 1.5), (2.5, 2.9)];
        let opt = parabola_optimum(&points).unwrap();
        if opt.fallback {
            assert!((opt.m_opt.ln() - 1.0).abs() < 1e-12);
            assert_eq!(opt.loss_opt, 1.0);
        }
        assert!(parabola_optimum(&[(1.0, 1.0), (2.0, 2.0)]).is_err());
    }

    #[test]
    fn noisy_parabola_vertex_within_two_percent() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        let truth_u = 11.0f64;
        let mut failures = 0;
        for _ in 0..100 {
            let points: Vec<(f64, f64)> = (0..5)
                .map(|i| {
                    let u = truth_u - 2.0 + i as f64;
                    let loss = 1.5 + 0.2 * (u - truth_u) * (u - truth_u)
                        + rng.gen_range(-1e-3..1e-3);
                    (u, loss)
                })
                .collect();
            let opt = parabola_optimum(&points).unwrap();
            // 2% in M-space
            if (opt.m_opt.ln() - truth_u).abs() > 0.02f64.ln_1p() {
                failures += 1;
            }
        }
        assert_eq!(failures, 0);
    }
}

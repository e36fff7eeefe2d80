//! Hyperbolic iso-loss law relating batch size and step count:
//! `((S/S_min)^alpha - 1) * ((B/B_min)^alpha - 1) = 1`, and its
//! token-optimal point.

use serde::{Deserialize, Serialize};

use crate::error::{Result, ScalingError};
use crate::nls::{least_squares, NlsOptions};

/// Unit in which batch sizes are expressed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BatchUnit {
    Sequences,
    Tokens,
}

/// Fitted iso-loss hyperbola.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperbolaFit {
    /// Step-count asymptote.
    pub s_min: f64,
    /// Batch-size asymptote.
    pub b_min: f64,
    /// Stiffness exponent; larger means sharper sensitivity to suboptimal
    /// batch sizes.
    pub stiffness: f64,
    /// Root-mean-square orthogonal log-space residual.
    pub residual: f64,
    pub unit: BatchUnit,
    /// The loss level the (B, S) points share.
    pub target_loss: f64,
}

impl HyperbolaFit {
    /// Step count on the fitted curve at batch size `b` (requires
    /// `b > b_min`).
    pub fn steps_at(&self, b: f64) -> Result<f64> {
        if !(b > self.b_min) {
            return Err(ScalingError::Degenerate(format!(
                "batch {b} at or below the asymptote {}",
                self.b_min
            )));
        }
        let g = (b / self.b_min).powf(self.stiffness) - 1.0;
        Ok(self.s_min * (1.0 + 1.0 / g).powf(1.0 / self.stiffness))
    }
}

/// Token-optimal operating point of a fitted hyperbola.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TokenOptimal {
    pub b_star: f64,
    pub s_star: f64,
    pub d_star: f64,
}

/// Closed form of the token-optimal pair: `B* = 2^{1/alpha} B_min`,
/// `S* = 2^{1/alpha} S_min`, `D* = 4^{1/alpha} B_min S_min`.
pub fn token_optimal(fit: &HyperbolaFit) -> TokenOptimal {
    let scale = 2f64.powf(1.0 / fit.stiffness);
    TokenOptimal {
        b_star: scale * fit.b_min,
        s_star: scale * fit.s_min,
        d_star: scale * scale * fit.b_min * fit.s_min,
    }
}

/// Implicit curve value and gradient in `(u, v) = (log B, log S)` space:
/// `F = log(e^{alpha(u-u0)} - 1) + log(e^{alpha(v-v0)} - 1)`, zero on the
/// hyperbola.
fn implicit(u: f64, v: f64, u0: f64, v0: f64, alpha: f64) -> Option<(f64, f64, f64)> {
    let p = alpha * (u - u0);
    let q = alpha * (v - v0);
    if p <= 0.0 || q <= 0.0 {
        return None;
    }
    let ep = p.exp_m1(); // e^p - 1
    let eq = q.exp_m1();
    let f = ep.ln() + eq.ln();
    // dF/du = alpha e^p / (e^p - 1)
    let du = alpha * (ep + 1.0) / ep;
    let dv = alpha * (eq + 1.0) / eq;
    Some((f, du, dv))
}

/// Fit the hyperbola by least squares on first-order orthogonal log-space
/// residuals `F / |grad F|` (both coordinates are treated as noisy).
/// Initialization follows the extreme points: `B_min = 0.9 min B`,
/// `S_min = 0.9 min S`, `alpha = 0.15`.
pub fn fit_hyperbola(
    points: &[(f64, f64)],
    unit: BatchUnit,
    target_loss: f64,
) -> Result<HyperbolaFit> {
    if points.len() < 4 {
        return Err(ScalingError::Degenerate(format!(
            "hyperbola fit needs at least 4 points, got {}",
            points.len()
        )));
    }
    if points.iter().any(|&(b, s)| !(b > 0.0 && s > 0.0)) {
        return Err(ScalingError::Degenerate(
            "batch sizes and step counts must be positive".into(),
        ));
    }
    let us: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let vs: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let (u_min, u_max) = min_max(&us);
    let (v_min, v_max) = min_max(&vs);
    if u_max - u_min < 2f64.ln() || v_max - v_min < 2f64.ln() {
        return Err(ScalingError::Degenerate(
            "points lie on one arm only: need a factor-2 spread in both batch and steps".into(),
        ));
    }

    // smooth parameterization keeps the asymptotes strictly below the data
    // and the stiffness positive without hard clamps:
    // u0 = u_min - e^{t0}, v0 = v_min - e^{t1}, alpha = e^{t2}
    let eval = |p: &[f64]| -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let mut r = Vec::with_capacity(points.len());
        let mut jac = Vec::with_capacity(points.len());
        let h = 1e-6;
        for (&u, &v) in us.iter().zip(vs.iter()) {
            let res_at = |t: &[f64]| -> f64 {
                let u0 = u_min - t[0].exp();
                let v0 = v_min - t[1].exp();
                let alpha = t[2].exp();
                match implicit(u, v, u0, v0, alpha) {
                    Some((f, du, dv)) => f / du.hypot(dv),
                    None => 1e3,
                }
            };
            r.push(res_at(p));
            let mut row = Vec::with_capacity(3);
            for j in 0..3 {
                let mut hi = p.to_vec();
                let mut lo = p.to_vec();
                hi[j] += h;
                lo[j] -= h;
                row.push((res_at(&hi) - res_at(&lo)) / (2.0 * h));
            }
            jac.push(row);
        }
        Ok((r, jac))
    };
    // B_min <- 0.9 min B, S_min <- 0.9 min S, alpha <- 0.15
    let gap = (-(0.9f64.ln())).ln();
    let x0 = [gap, gap, 0.15f64.ln()];
    let res = least_squares(
        eval,
        &x0,
        &[-30.0, -30.0, (1e-4f64).ln()],
        &[30.0, 30.0, (10.0f64).ln()],
        &NlsOptions::default(),
    )?;
    let rms = (2.0 * res.cost / points.len() as f64).sqrt();
    Ok(HyperbolaFit {
        b_min: (u_min - res.params[0].exp()).exp(),
        s_min: (v_min - res.params[1].exp()).exp(),
        stiffness: res.params[2].exp(),
        residual: rms,
        unit,
        target_loss,
    })
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        })
}

/// Generate `(B, S)` points exactly on a hyperbola, log-spaced in the batch
/// "excess" coordinate so both arms are covered.
pub fn hyperbola_points(
    s_min: f64,
    b_min: f64,
    alpha: f64,
    n: usize,
) -> Vec<(f64, f64)> {
    // (B/Bmin)^alpha - 1 = g, with g log-spaced over [0.05, 20]
    (0..n)
        .map(|i| {
            let g = 0.05 * (20.0f64 / 0.05).powf(i as f64 / (n - 1) as f64);
            let b = b_min * (1.0 + g).powf(1.0 / alpha);
            let s = s_min * (1.0 + 1.0 / g).powf(1.0 / alpha);
            (b, s)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn exact_points_recover_parameters() {
        let pts = hyperbola_points(500.0, 16.0, 0.15, 14);
        let fit = fit_hyperbola(&pts, BatchUnit::Sequences, 3.0).unwrap();
        assert!((fit.s_min - 500.0).abs() / 500.0 < 1e-6, "{}", fit.s_min);
        assert!((fit.b_min - 16.0).abs() / 16.0 < 1e-6, "{}", fit.b_min);
        assert!((fit.stiffness - 0.15).abs() < 1e-6);
        assert!(fit.residual < 1e-9);
    }

    #[test]
    fn token_optimal_closed_form() {
        // alpha = 1: B* = 2 B_min, S* = 2 S_min, D* = 4 B_min S_min
        let fit = HyperbolaFit {
            s_min: 100.0,
            b_min: 8.0,
            stiffness: 1.0,
            residual: 0.0,
            unit: BatchUnit::Sequences,
            target_loss: 3.0,
        };
        let opt = token_optimal(&fit);
        assert_eq!(opt.b_star, 16.0);
        assert_eq!(opt.s_star, 200.0);
        assert_eq!(opt.d_star, 3200.0);
        assert!((opt.d_star - opt.b_star * opt.s_star).abs() < 1e-9);
        // alpha = 0.2: B* = 32 B_min
        let fit = HyperbolaFit {
            stiffness: 0.2,
            ..fit
        };
        assert!((token_optimal(&fit).b_star - 32.0 * 8.0).abs() < 1e-9);
    }

    #[test]
    fn closed_form_matches_constrained_grid_search() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let fit = HyperbolaFit {
                s_min: rng.gen_range(50.0..5000.0),
                b_min: rng.gen_range(2.0..500.0),
                stiffness: rng.gen_range(0.08..0.5),
                residual: 0.0,
                unit: BatchUnit::Tokens,
                target_loss: 3.0,
            };
            let opt = token_optimal(&fit);
            // numeric minimization of D = B * S(B) along the curve
            let mut best_d = f64::INFINITY;
            for i in 0..40_000 {
                let b = fit.b_min * (1.0 + 1e-4) * 1.0005f64.powi(i);
                let s = fit.steps_at(b).unwrap();
                best_d = best_d.min(b * s);
            }
            assert!(
                (best_d - opt.d_star).abs() / opt.d_star < 1e-3,
                "{best_d} vs {}",
                opt.d_star
            );
        }
    }

    #[test]
    fn noisy_points_recover_b_min_within_five_percent() {
        let truth = (800.0, 24.0, 0.18);
        let mut errs = Vec::new();
        for trial in 0..100u64 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(300 + trial);
            let pts: Vec<(f64, f64)> = hyperbola_points(truth.0, truth.1, truth.2, 12)
                .into_iter()
                .map(|(b, s)| {
                    (
                        b * (1.0 + 0.02 * rng.gen_range(-1.0..1.0)),
                        s * (1.0 + 0.02 * rng.gen_range(-1.0..1.0)),
                    )
                })
                .collect();
            let fit = fit_hyperbola(&pts, BatchUnit::Sequences, 3.0).unwrap();
            errs.push((fit.b_min - truth.1).abs() / truth.1);
        }
        errs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!(errs[errs.len() / 2] < 0.05, "median {}", errs[errs.len() / 2]);
    }

    #[test]
    fn one_armed_data_is_rejected() {
        // only the steps arm varies
        let pts: Vec<(f64, f64)> = (0..6).map(|i| (10.0 + 0.01 * i as f64, 100.0 * (i + 1) as f64)).collect();
        assert!(fit_hyperbola(&pts, BatchUnit::Sequences, 3.0).is_err());
        assert!(fit_hyperbola(&[(1.0, 1.0); 3], BatchUnit::Sequences, 3.0).is_err());
    }
}


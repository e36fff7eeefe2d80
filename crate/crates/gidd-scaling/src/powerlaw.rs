//! Power-law fitting with and without an irreducible term, plus bootstrap
//! confidence intervals.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ScalingError};
use crate::nls::{least_squares, NlsOptions};

/// Per-coefficient confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub low: f64,
    pub high: f64,
}

impl Interval {
    pub fn contains(&self, v: f64) -> bool {
        self.low <= v && v <= self.high
    }

    pub fn width(&self) -> f64 {
        self.high - self.low
    }
}

/// Confidence intervals for (prefactor, exponent, irreducible term).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitIntervals {
    pub a: Interval,
    pub alpha: Interval,
    pub e: Interval,
}

/// A fitted law `y = A x^alpha + E` (`E = 0` when fitted without the
/// irreducible term). `r_squared` is measured in the fitting (log) space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub a: f64,
    pub alpha: f64,
    pub e: f64,
    pub with_intercept: bool,
    pub r_squared: f64,
    pub n_points: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci: Option<FitIntervals>,
}

impl PowerLawFit {
    pub fn evaluate(&self, x: f64) -> f64 {
        self.a * x.powf(self.alpha) + self.e
    }

    fn coefficients(&self) -> [f64; 3] {
        [self.a, self.alpha, self.e]
    }
}

fn check_positive(xs: &[f64], ys: &[f64]) -> Result<()> {
    if xs.len() != ys.len() {
        return Err(ScalingError::Degenerate("x/y length mismatch".into()));
    }
    if xs.iter().chain(ys.iter()).any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(ScalingError::Degenerate(
            "power-law fits require positive finite data".into(),
        ));
    }
    Ok(())
}

fn distinct_count(xs: &[f64]) -> usize {
    let mut sorted: Vec<f64> = xs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    sorted.dedup();
    sorted.len()
}

/// Ordinary least squares of `log y` on `log x`; returns
/// (intercept `log A`, slope `alpha`, R^2 in log space).
fn loglog_ols(xs: &[f64], ys: &[f64]) -> Result<(f64, f64, f64)> {
    let n = xs.len() as f64;
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = lx.iter().zip(ly.iter()).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx <= 0.0 {
        return Err(ScalingError::Degenerate(
            "all x values coincide; slope is undefined".into(),
        ));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ly.iter().map(|y| (y - my) * (y - my)).sum();
    let ss_res: f64 = lx
        .iter()
        .zip(ly.iter())
        .map(|(x, y)| {
            let p = intercept + slope * x;
            (y - p) * (y - p)
        })
        .sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok((intercept, slope, r2))
}

/// Fit `y = A x^alpha` (log-log least squares) or `y = A x^alpha + E` with
/// `E >= 0` (damped least squares in log space, analytic Jacobian,
/// initialized from the no-intercept fit with `E = 0`).
pub fn fit_power_law(xs: &[f64], ys: &[f64], with_intercept: bool) -> Result<PowerLawFit> {
    check_positive(xs, ys)?;
    let min_n = if with_intercept { 4 } else { 3 };
    if xs.len() < min_n {
        return Err(ScalingError::Degenerate(format!(
            "need at least {min_n} points, got {}",
            xs.len()
        )));
    }
    if distinct_count(xs) < 2 {
        return Err(ScalingError::Degenerate("need at least 2 distinct x".into()));
    }
    let (log_a, alpha, r2) = loglog_ols(xs, ys)?;
    if !with_intercept {
        return Ok(PowerLawFit {
            a: log_a.exp(),
            alpha,
            e: 0.0,
            with_intercept: false,
            r_squared: r2,
            n_points: xs.len(),
            ci: None,
        });
    }

    // parameters (log A, alpha, E); residuals in log space
    let eval = |p: &[f64]| -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let (la, al, e) = (p[0], p[1], p[2]);
        let mut r = Vec::with_capacity(xs.len());
        let mut jac = Vec::with_capacity(xs.len());
        for (&x, &y) in xs.iter().zip(ys.iter()) {
            let pow = (la + al * x.ln()).exp(); // A x^alpha
            let s = pow + e;
            if !(s > 0.0) {
                return Err(ScalingError::NoConvergence(
                    "model value collapsed to zero".into(),
                ));
            }
            r.push(s.ln() - y.ln());
            jac.push(vec![pow / s, pow * x.ln() / s, 1.0 / s]);
        }
        Ok((r, jac))
    };
    let res = least_squares(
        eval,
        &[log_a, alpha, 0.0],
        &[f64::NEG_INFINITY, f64::NEG_INFINITY, 0.0],
        &[f64::INFINITY, f64::INFINITY, f64::INFINITY],
        &NlsOptions::default(),
    )?;
    let (la, al, e) = (res.params[0], res.params[1], res.params[2]);
    // R^2 in the fitting (log) space
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let my = ly.iter().sum::<f64>() / ly.len() as f64;
    let ss_tot: f64 = ly.iter().map(|y| (y - my) * (y - my)).sum();
    let ss_res = 2.0 * res.cost;
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(PowerLawFit {
        a: la.exp(),
        alpha: al,
        e,
        with_intercept: true,
        r_squared: r2,
        n_points: xs.len(),
        ci: None,
    })
}

/// Confidence level of a bootstrap interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConfidenceLevel {
    /// Central ~95.45% interval (normal two-sigma equivalent).
    TwoSigma,
    Ci95,
    Ci99,
}

impl ConfidenceLevel {
    fn tail(&self) -> f64 {
        match self {
            ConfidenceLevel::TwoSigma => 0.02275,
            ConfidenceLevel::Ci95 => 0.025,
            ConfidenceLevel::Ci99 => 0.005,
        }
    }
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < n {
        sorted[i] * (1.0 - frac) + sorted[i + 1] * frac
    } else {
        sorted[n - 1]
    }
}

/// Case-resampling bootstrap around an arbitrary fit procedure. Returns
/// percentile intervals for each coefficient the procedure emits, widened
/// (if necessary) to bracket the full-data point estimate. Degenerate
/// resamples (the procedure errors) are redrawn a bounded number of times.
pub fn bootstrap_ci<F>(
    fit: F,
    points: &[(f64, f64)],
    n_resamples: usize,
    level: ConfidenceLevel,
    rng_seed: u64,
) -> Result<Vec<Interval>>
where
    F: Fn(&[(f64, f64)]) -> Result<Vec<f64>>,
{
    if points.len() < 3 {
        return Err(ScalingError::Degenerate(
            "bootstrap requires at least 3 points".into(),
        ));
    }
    let estimate = fit(points)?;
    let n_coef = estimate.len();
    let mut draws: Vec<Vec<f64>> = vec![Vec::with_capacity(n_resamples); n_coef];
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    for k in 0..n_resamples {
        rng.set_stream(k as u64);
        let mut coefs = None;
        for _retry in 0..100 {
            let resample: Vec<(f64, f64)> = (0..points.len())
                .map(|_| points[rng.gen_range(0..points.len())])
                .collect();
            if let Ok(c) = fit(&resample) {
                coefs = Some(c);
                break;
            }
        }
        let coefs = coefs.ok_or_else(|| {
            ScalingError::Degenerate("bootstrap resampling kept producing degenerate draws".into())
        })?;
        for (j, c) in coefs.into_iter().enumerate() {
            draws[j].push(c);
        }
    }
    let tail = level.tail();
    Ok(draws
        .iter()
        .zip(estimate.iter())
        .map(|(d, &est)| {
            let mut sorted = d.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            Interval {
                low: percentile(&sorted, tail).min(est),
                high: percentile(&sorted, 1.0 - tail).max(est),
            }
        })
        .collect())
}

/// Attach bootstrap intervals for (A, alpha, E) to a power-law fit.
pub fn power_law_with_ci(
    xs: &[f64],
    ys: &[f64],
    with_intercept: bool,
    n_resamples: usize,
    level: ConfidenceLevel,
    rng_seed: u64,
) -> Result<PowerLawFit> {
    let mut fit = fit_power_law(xs, ys, with_intercept)?;
    let points: Vec<(f64, f64)> = xs.iter().copied().zip(ys.iter().copied()).collect();
    let proc = |pts: &[(f64, f64)]| -> Result<Vec<f64>> {
        let (x, y): (Vec<f64>, Vec<f64>) = pts.iter().copied().unzip();
        let f = fit_power_law(&x, &y, with_intercept)?;
        Ok(f.coefficients().to_vec())
    };
    let iv = bootstrap_ci(proc, &points, n_resamples, level, rng_seed)?;
    fit.ci = Some(FitIntervals {
        a: iv[0],
        alpha: iv[1],
        e: iv[2],
    });
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_law_recovered_to_machine_precision() {
        let xs: Vec<f64> = (1..=10).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x.sqrt()).collect();
        let fit = fit_power_law(&xs, &ys, false).unwrap();
        assert!((fit.a - 2.0).abs() < 1e-10);
        assert!((fit.alpha - 0.5).abs() < 1e-10);
        assert!((fit.r_squared - 1.0).abs() < 1e-10);
        assert_eq!(fit.e, 0.0);
    }

    #[test]
    fn with_intercept_recovers_zero_e_on_pure_power_data() {
        // decaying law in the style of the compute-loss fits
        let xs: Vec<f64> = (0..12).map(|i| 1e15 * 10f64.powf(i as f64 * 0.25)).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 31.26 * x.powf(-0.0522)).collect();
        let fit = fit_power_law(&xs, &ys, true).unwrap();
        assert!(fit.e.abs() < 1e-8, "E = {}", fit.e);
        assert!((fit.alpha + 0.0522).abs() < 1e-6);
        assert!((fit.a - 31.26).abs() / 31.26 < 1e-4);
    }

    #[test]
    fn with_intercept_recovers_nonzero_e_under_noise() {
        use rand::{Rng, SeedableRng};
        let xs: Vec<f64> = (0..30).map(|i| 10f64.powf(1.0 + i as f64 * 0.1)).collect();
        let mut errs = Vec::new();
        for trial in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + trial);
            let ys: Vec<f64> = xs
                .iter()
                .map(|x| (5.0 * x.powf(0.3) + 1.5) * (1.0 + 0.01 * rng.gen_range(-1.0..1.0)))
                .collect();
            let fit = fit_power_law(&xs, &ys, true).unwrap();
            errs.push((fit.e - 1.5).abs() / 1.5);
        }
        errs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = errs[errs.len() / 2];
        assert!(median < 0.10, "median E error {median}");
    }

    #[test]
    fn scale_equivariance() {
        let xs: Vec<f64> = (1..=8).map(|i| 3f64.powi(i)).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 0.7 * x.powf(1.3)).collect();
        let base = fit_power_law(&xs, &ys, false).unwrap();
        let c = 100.0;
        let xs_scaled: Vec<f64> = xs.iter().map(|x| c * x).collect();
        let scaled = fit_power_law(&xs_scaled, &ys, false).unwrap();
        assert!((scaled.alpha - base.alpha).abs() < 1e-10);
        assert!((scaled.a - base.a * c.powf(-base.alpha)).abs() / scaled.a < 1e-9);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(fit_power_law(&[1.0, 2.0], &[1.0, 2.0], false).is_err());
        assert!(fit_power_law(&[1.0, 2.0, -3.0], &[1.0, 2.0, 3.0], false).is_err());
        assert!(fit_power_law(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0], false).is_err());
        assert!(fit_power_law(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], true).is_err());
    }

    #[test]
    fn bootstrap_zero_noise_is_tight_and_deterministic() {
        let xs: Vec<f64> = (1..=12).map(|i| 2f64.powi(i)).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 4.0 * x.powf(0.45)).collect();
        let fit = power_law_with_ci(&xs, &ys, false, 200, ConfidenceLevel::TwoSigma, 5).unwrap();
        let ci = fit.ci.unwrap();
        assert!(ci.alpha.width() <= 1e-8, "width {}", ci.alpha.width());
        assert!(ci.a.width() / fit.a <= 1e-6);
        assert!(ci.alpha.contains(fit.alpha));
        let again = power_law_with_ci(&xs, &ys, false, 200, ConfidenceLevel::TwoSigma, 5).unwrap();
        assert_eq!(fit.ci, again.ci);
    }

    #[test]
    fn bootstrap_coverage_on_noisy_data() {
        use rand::{Rng, SeedableRng};
        let xs: Vec<f64> = (0..20).map(|i| 10f64.powf(i as f64 * 0.15)).collect();
        let mut covered = 0;
        let reps = 100u64;
        for rep in 0..reps {
            let mut rng = ChaCha8Rng::seed_from_u64(40_000 + rep);
            let ys: Vec<f64> = xs
                .iter()
                .map(|x| 2.0 * x.powf(0.45) * (1.0 + 0.05 * rng.gen_range(-1.0f64..1.0)).max(0.01))
                .collect();
            let fit =
                power_law_with_ci(&xs, &ys, false, 400, ConfidenceLevel::TwoSigma, rep).unwrap();
            if fit.ci.unwrap().alpha.contains(0.45) {
                covered += 1;
            }
        }
        assert!(covered >= 90, "coverage {covered}/{reps}");
    }
}

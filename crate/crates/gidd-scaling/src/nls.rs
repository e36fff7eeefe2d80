//! Small dense nonlinear least squares (Levenberg-Marquardt with box
//! clamping), sized for the two- and three-parameter fits in this crate.

use crate::error::{Result, ScalingError};

pub struct NlsOptions {
    pub max_iters: usize,
    pub rel_step_tol: f64,
    pub lambda_init: f64,
}

impl Default for NlsOptions {
    fn default() -> Self {
        Self {
            max_iters: 500,
            rel_step_tol: 1e-10,
            lambda_init: 1e-3,
        }
    }
}

pub struct NlsResult {
    pub params: Vec<f64>,
    pub cost: f64,
}

/// Minimize `0.5 * sum r_i(x)^2` with damped Gauss-Newton steps. `eval`
/// returns the residual vector and the Jacobian `J[i][j] = dr_i/dx_j`.
/// Parameters are clamped into `[lower, upper]` after every trial step.
pub fn least_squares<F>(
    eval: F,
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    opts: &NlsOptions,
) -> Result<NlsResult>
where
    F: Fn(&[f64]) -> Result<(Vec<f64>, Vec<Vec<f64>>)>,
{
    let n = x0.len();
    assert!(n > 0 && n <= 8, "solver sized for small problems");
    let clamp = |x: &mut [f64]| {
        for j in 0..n {
            x[j] = x[j].clamp(lower[j], upper[j]);
        }
    };
    let mut x = x0.to_vec();
    clamp(&mut x);
    let (mut r, mut jac) = eval(&x)?;
    let mut cost = 0.5 * r.iter().map(|v| v * v).sum::<f64>();
    let mut mu = opts.lambda_init;
    let mut converged = false;
    let mut iters = 0;

    for _ in 0..opts.max_iters {
        iters += 1;
        // normal equations J^T J + mu * diag(J^T J)
        let mut jtj = vec![vec![0.0; n]; n];
        let mut jtr = vec![0.0; n];
        for (ri, row) in r.iter().zip(jac.iter()) {
            for j in 0..n {
                jtr[j] += row[j] * ri;
                for k in 0..n {
                    jtj[j][k] += row[j] * row[k];
                }
            }
        }
        let grad_norm = jtr.iter().map(|v| v.abs()).fold(0.0, f64::max);
        if grad_norm < 1e-14 {
            converged = true;
            break;
        }
        let mut accepted = false;
        for _ in 0..24 {
            let mut a = jtj.clone();
            for j in 0..n {
                a[j][j] += mu * jtj[j][j].max(1e-12);
            }
            let rhs: Vec<f64> = jtr.iter().map(|v| -v).collect();
            let Some(step) = solve_dense(&a, &rhs) else {
                mu *= 4.0;
                continue;
            };
            let mut trial = x.clone();
            for j in 0..n {
                trial[j] += step[j];
            }
            clamp(&mut trial);
            let (tr, tjac) = eval(&trial)?;
            let tcost = 0.5 * tr.iter().map(|v| v * v).sum::<f64>();
            if tcost.is_finite() && tcost <= cost {
                let rel_step = (0..n)
                    .map(|j| (trial[j] - x[j]).abs() / (x[j].abs() + 1e-12))
                    .fold(0.0, f64::max);
                x = trial;
                r = tr;
                jac = tjac;
                let improved = cost - tcost;
                cost = tcost;
                mu = (mu / 3.0).max(1e-14);
                accepted = true;
                if rel_step < opts.rel_step_tol || improved < 1e-18 * (1.0 + cost) {
                    converged = true;
                }
                break;
            }
            mu *= 4.0;
        }
        if !accepted {
            // damping exhausted; treat the current point as stationary
            converged = true;
        }
        if converged {
            break;
        }
    }
    if !converged {
        return Err(ScalingError::NoConvergence(format!(
            "no convergence after {iters} iterations (cost {cost:.3e})"
        )));
    }
    Ok(NlsResult { params: x, cost })
}

/// Gaussian elimination with partial pivoting; `None` for singular systems.
fn solve_dense(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .zip(b.iter())
        .map(|(row, &bi)| {
            let mut r = row.clone();
            r.push(bi);
            r
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| {
            m[i][col]
                .abs()
                .partial_cmp(&m[j][col].abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        })?;
        if m[pivot][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, pivot);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            for k in col..=n {
                m[row][k] -= f * m[col][k];
            }
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let mut acc = m[col][n];
        for k in col + 1..n {
            acc -= m[col][k] * x[k];
        }
        x[col] = acc / m[col][col];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_linear_system() {
        let a = vec![vec![2.0, 1.0], vec![1.0, 3.0]];
        let x = solve_dense(&a, &[5.0, 10.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12);
        assert!((x[1] - 3.0).abs() < 1e-12);
        let singular = vec![vec![1.0, 2.0], vec![2.0, 4.0]];
        assert!(solve_dense(&singular, &[1.0, 2.0]).is_none());
    }

    #[test]
    fn fits_exponential_decay() {
        // y = a * exp(b t) at (a, b) = (2, -0.5)
        let ts: Vec<f64> = (0..20).map(|i| i as f64 * 0.3).collect();
        let ys: Vec<f64> = ts.iter().map(|t| 2.0 * (-0.5 * t).exp()).collect();
        let eval = |p: &[f64]| -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
            let (a, b) = (p[0], p[1]);
            let mut r = Vec::new();
            let mut j = Vec::new();
            for (t, y) in ts.iter().zip(ys.iter()) {
                let m = a * (b * t).exp();
                r.push(m - y);
                j.push(vec![(b * t).exp(), a * t * (b * t).exp()]);
            }
            Ok((r, j))
        };
        let res = least_squares(
            eval,
            &[1.0, -0.1],
            &[f64::NEG_INFINITY; 2],
            &[f64::INFINITY; 2],
            &NlsOptions::default(),
        )
        .unwrap();
        assert!((res.params[0] - 2.0).abs() < 1e-8);
        assert!((res.params[1] + 0.5).abs() < 1e-8);
        assert!(res.cost < 1e-16);
    }

    #[test]
    fn respects_bounds() {
        // minimize (x - 3)^2 with x <= 1
        let eval = |p: &[f64]| -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
            Ok((vec![p[0] - 3.0], vec![vec![1.0]]))
        };
        let res = least_squares(eval, &[0.0], &[-10.0], &[1.0], &NlsOptions::default()).unwrap();
        assert!((res.params[0] - 1.0).abs() < 1e-9);
    }
}

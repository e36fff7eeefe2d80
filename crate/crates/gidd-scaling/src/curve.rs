//! Locally linear reads on loss curves: the loss achieved at a target
//! abscissa, and the abscissa at which a target loss is crossed. Both
//! directions fit a small window of points around the closest observation in
//! (log x, y) space.

use crate::error::{Result, ScalingError};

/// Default window width (points) of the local linear fit.
pub const DEFAULT_WINDOW: usize = 5;

/// OLS line through `(x, y)` pairs; returns (intercept, slope).
fn line_fit(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx <= 0.0 {
        return Err(ScalingError::Degenerate("window has no x-spread".into()));
    }
    let sxy: f64 = xs.iter().zip(ys.iter()).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Ok((my - slope * mx, slope))
}

/// Indices of a window of `w` points centered on `center`, clipped to the
/// array bounds (the window shifts inward at the edges).
fn window_bounds(len: usize, center: usize, w: usize) -> (usize, usize) {
    let w = w.clamp(1, len);
    let half = w / 2;
    let start = center.saturating_sub(half).min(len - w);
    (start, start + w)
}

/// A monotone-x curve of `(log x, y)` observations.
#[derive(Debug, Clone)]
pub struct LogCurve {
    log_x: Vec<f64>,
    y: Vec<f64>,
}

impl LogCurve {
    /// Build from raw positive x values; enforces strictly increasing x.
    pub fn new(xs: &[f64], ys: &[f64]) -> Result<Self> {
        if xs.len() != ys.len() || xs.len() < 2 {
            return Err(ScalingError::Degenerate(
                "curve needs at least two equal-length points".into(),
            ));
        }
        if xs.iter().any(|&x| !(x > 0.0)) {
            return Err(ScalingError::Degenerate("x values must be positive".into()));
        }
        if xs.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(ScalingError::Degenerate(
                "x values must be strictly increasing".into(),
            ));
        }
        Ok(Self {
            log_x: xs.iter().map(|x| x.ln()).collect(),
            y: ys.to_vec(),
        })
    }

    pub fn covers(&self, x: f64) -> bool {
        let lx = x.ln();
        lx >= self.log_x[0] && lx <= *self.log_x.last().unwrap()
    }

    fn closest_index(&self, lx: f64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, &v) in self.log_x.iter().enumerate() {
            let d = (v - lx).abs();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    /// Value of the local linear fit at target x. A target that coincides
    /// with a grid point returns that observation directly; window `w = 1`
    /// degenerates to nearest-neighbor.
    pub fn value_at(&self, x: f64, w: usize) -> Result<f64> {
        if !self.covers(x) {
            return Err(ScalingError::Degenerate(format!(
                "target {x} outside the curve's range"
            )));
        }
        let lx = x.ln();
        let center = self.closest_index(lx);
        if w <= 1 || (self.log_x[center] - lx).abs() < 1e-12 {
            return Ok(self.y[center]);
        }
        let (lo, hi) = window_bounds(self.log_x.len(), center, w);
        let (intercept, slope) = line_fit(&self.log_x[lo..hi], &self.y[lo..hi])?;
        Ok(intercept + slope * lx)
    }

    /// The x at which the local linear fit crosses a target y, anchored at
    /// the observation closest to the target in y.
    pub fn crossing_at(&self, y_target: f64, w: usize) -> Result<f64> {
        let mut center = 0;
        let mut best = f64::INFINITY;
        for (i, &v) in self.y.iter().enumerate() {
            let d = (v - y_target).abs();
            if d < best {
                best = d;
                center = i;
            }
        }
        let (lo, hi) = window_bounds(self.log_x.len(), center, w.max(2));
        let (intercept, slope) = line_fit(&self.log_x[lo..hi], &self.y[lo..hi])?;
        if slope.abs() < 1e-300 {
            return Err(ScalingError::Degenerate(
                "curve is flat around the target loss".into(),
            ));
        }
        let lx = (y_target - intercept) / slope;
        Ok(lx.exp())
    }
}

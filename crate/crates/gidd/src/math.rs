//! Numerically stable scalar helpers shared across the crate.
//!
//! All sigmoid evaluations route through [`sigmoid`] / [`sigmoid_pair`] so
//! that saturated arguments (|x| up to ~1e3, e.g. the pure-masking and
//! pure-uniform shifts b = ∓1000) behave as exact 0/1 instead of overflowing.

/// Stable logistic function, `1 / (1 + e^{-x})`.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `(sigmoid(x), sigmoid(-x))` computed from a single exponential so the
/// pair sums to 1 within a couple of ulps.
pub fn sigmoid_pair(x: f64) -> (f64, f64) {
    let t = (-x.abs()).exp();
    let d = 1.0 + t;
    let near = 1.0 / d; // sigmoid(|x|)
    let far = t / d; // sigmoid(-|x|)
    if x >= 0.0 {
        (near, far)
    } else {
        (far, near)
    }
}

/// Derivative of the logistic function, `sigmoid(x) * sigmoid(-x)`.
pub fn sigmoid_deriv(x: f64) -> f64 {
    let (a, b) = sigmoid_pair(x);
    a * b
}

/// Inverse of [`sigmoid`]: `log(p / (1 - p))`.
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_midpoint_and_saturation() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert_eq!(sigmoid(1000.0), 1.0);
        assert!(sigmoid(1e3).is_finite());
        assert!(sigmoid(-1e3).is_finite());
    }

    #[test]
    fn pair_sums_to_one() {
        for &x in &[-1000.0, -9.0, -2.0, -0.3, 0.0, 0.7, 2.0, 9.0, 1000.0] {
            let (a, b) = sigmoid_pair(x);
            assert!((a + b - 1.0).abs() <= 1e-15, "x={x}");
            assert!((a - sigmoid(x)).abs() <= 1e-15);
        }
    }

    #[test]
    fn deriv_matches_finite_difference() {
        let h = 1e-6;
        for &x in &[-4.0, -1.0, 0.0, 0.5, 3.0] {
            let fd = (sigmoid(x + h) - sigmoid(x - h)) / (2.0 * h);
            assert!((sigmoid_deriv(x) - fd).abs() < 1e-9);
        }
        assert_eq!(sigmoid_deriv(0.0), 0.25);
        assert_eq!(sigmoid_deriv(-1000.0), 0.0);
    }

    #[test]
    fn logit_inverts_sigmoid() {
        for &x in &[-5.0, -0.5, 0.0, 1.5, 6.0] {
            assert!((logit(sigmoid(x)) - x).abs() < 1e-9);
        }
    }
}

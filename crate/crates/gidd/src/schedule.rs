//! Log-SNR coordinate and the sigmoid mixing schedule.

use serde::{Deserialize, Serialize};

use crate::error::{GiddError, Result};
use crate::math::{sigmoid, sigmoid_pair};

/// Default clamp bounds on the log-SNR coordinate.
pub const DEFAULT_LAMBDA_MIN: f64 = -9.0;
pub const DEFAULT_LAMBDA_MAX: f64 = 9.0;

/// Shift value that saturates the mixing sigmoid to pure masking.
pub const SHIFT_MASKING: f64 = -1000.0;
/// Shift value that saturates the mixing sigmoid to pure uniform noise.
pub const SHIFT_UNIFORM: f64 = 1000.0;

/// Log signal-to-noise ratio, `lambda = log(alpha / (1 - alpha))`.
///
/// The signal strength is recovered as `alpha = sigmoid(lambda)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct LogSnr(pub f64);

impl LogSnr {
    pub fn value(self) -> f64 {
        self.0
    }

    /// Signal strength `alpha = sigmoid(lambda)`.
    pub fn alpha(self) -> f64 {
        sigmoid(self.0)
    }

    /// Noise strength `beta = sigmoid(-lambda)`.
    pub fn beta(self) -> f64 {
        sigmoid(-self.0)
    }

    /// `(alpha, beta)` computed jointly so they sum to 1 within ulps.
    pub fn alpha_beta(self) -> (f64, f64) {
        sigmoid_pair(self.0)
    }
}

impl From<f64> for LogSnr {
    fn from(v: f64) -> Self {
        LogSnr(v)
    }
}

/// Parameters of the hybrid mixing distribution: a sigmoid blend between
/// uniform noise and masking with slope `a` and shift `b`, together with the
/// log-SNR clamp range on which the process is defined.
///
/// `b -> -inf` saturates to pure masking, `b -> +inf` to pure uniform noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixingSchedule {
    a: f64,
    b: f64,
    lambda_min: f64,
    lambda_max: f64,
}

impl MixingSchedule {
    /// Schedule with slope `a`, shift `b` and the default clamp range.
    pub fn new(a: f64, b: f64) -> Result<Self> {
        Self::with_range(a, b, DEFAULT_LAMBDA_MIN, DEFAULT_LAMBDA_MAX)
    }

    /// Schedule with an explicit clamp range.
    pub fn with_range(a: f64, b: f64, lambda_min: f64, lambda_max: f64) -> Result<Self> {
        if !(a > 0.0) || !a.is_finite() {
            return Err(GiddError::InvalidSchedule(format!(
                "slope a must be positive and finite, got {a}"
            )));
        }
        if !b.is_finite() {
            return Err(GiddError::InvalidSchedule("shift b must be finite".into()));
        }
        if !(lambda_min < lambda_max) || !lambda_min.is_finite() || !lambda_max.is_finite() {
            return Err(GiddError::InvalidSchedule(format!(
                "need lambda_min < lambda_max, got [{lambda_min}, {lambda_max}]"
            )));
        }
        // Non-negativity of the ELBO weight vector requires
        // a * sigmoid(-(a*lambda + b)) <= 1 across the range; automatic for
        // a <= 1, checked at the worst case (the low end) otherwise.
        let y_min = a * lambda_min + b;
        if a * sigmoid(-y_min) > 1.0 {
            return Err(GiddError::InvalidSchedule(format!(
                "slope a={a} with shift b={b} yields a negative weight component at lambda={lambda_min}"
            )));
        }
        Ok(Self {
            a,
            b,
            lambda_min,
            lambda_max,
        })
    }

    /// Pure masking noise (`b = -1000`).
    pub fn masking() -> Self {
        Self::new(1.0, SHIFT_MASKING).expect("valid")
    }

    /// Pure uniform noise (`b = +1000`).
    pub fn uniform() -> Self {
        Self::new(1.0, SHIFT_UNIFORM).expect("valid")
    }

    /// Hybrid noise with unit slope and the given shift.
    pub fn hybrid(b: f64) -> Result<Self> {
        Self::new(1.0, b)
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn lambda_min(&self) -> f64 {
        self.lambda_min
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    /// Clamp a log-SNR into the schedule's range.
    pub fn clamp(&self, lambda: LogSnr) -> LogSnr {
        LogSnr(lambda.0.clamp(self.lambda_min, self.lambda_max))
    }

    /// Check that a log-SNR lies inside the clamp range.
    pub fn check_lambda(&self, lambda: LogSnr) -> Result<()> {
        if !lambda.0.is_finite() || lambda.0 < self.lambda_min || lambda.0 > self.lambda_max {
            return Err(GiddError::LambdaOutOfRange {
                lambda: lambda.0,
                min: self.lambda_min,
                max: self.lambda_max,
            });
        }
        Ok(())
    }

    /// Blend weight `sigmoid(a * lambda + b)` of the uniform component.
    pub fn uniform_weight(&self, lambda: LogSnr) -> f64 {
        sigmoid(self.a * lambda.0 + self.b)
    }

    /// The time at which the mixing sigmoid crosses 1/2 under the linear
    /// schedule `alpha = 1 - t`, namely `t = sigmoid(b / a)`.
    pub fn transition_time(&self) -> f64 {
        sigmoid(self.b / self.a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_parameters() {
        assert!(MixingSchedule::new(0.0, 0.0).is_err());
        assert!(MixingSchedule::new(-1.0, 0.0).is_err());
        assert!(MixingSchedule::with_range(1.0, 0.0, 2.0, 2.0).is_err());
        assert!(MixingSchedule::with_range(1.0, 0.0, 3.0, -3.0).is_err());
        assert!(MixingSchedule::new(1.0, f64::INFINITY).is_err());
    }

    #[test]
    fn steep_slopes_with_negative_weights_rejected() {
        // a=4 at lambda_min=-9, b=0: 4 * sigmoid(36) > 1.
        assert!(MixingSchedule::new(4.0, 0.0).is_err());
        // but a large shift can keep the weight valid
        assert!(MixingSchedule::new(4.0, 40.0).is_ok());
    }

    #[test]
    fn clamping_and_checks() {
        let s = MixingSchedule::hybrid(0.0).unwrap();
        assert_eq!(s.clamp(LogSnr(12.0)).value(), 9.0);
        assert_eq!(s.clamp(LogSnr(-12.0)).value(), -9.0);
        assert!(s.check_lambda(LogSnr(9.0)).is_ok());
        assert!(s.check_lambda(LogSnr(9.0001)).is_err());
        assert!(s.check_lambda(LogSnr(f64::NAN)).is_err());
    }

    #[test]
    fn transition_times_match_shift_values() {
        // t = sigmoid(b/a): shifts {-2, 0, 2} give {0.1192, 0.5, 0.8808}.
        let cases = [(-2.0, 0.11920292), (0.0, 0.5), (2.0, 0.88079708)];
        for (b, t) in cases {
            let s = MixingSchedule::hybrid(b).unwrap();
            assert!((s.transition_time() - t).abs() < 1e-7);
        }
    }

    #[test]
    fn alpha_beta_pair() {
        let l = LogSnr(2.0);
        let (a, b) = l.alpha_beta();
        assert!((a + b - 1.0).abs() < 1e-15);
        assert!((a - l.alpha()).abs() < 1e-15);
    }
}

//! Noise-type flag handling: named presets or an explicit shift.

use gidd::MixingSchedule;

use crate::CliError;

pub const PRESETS: &[(&str, f64)] = &[
    ("masked", -1000.0),
    ("low-uniform", -2.0),
    ("balanced", 0.0),
    ("high-uniform", 2.0),
    ("uniform", 1000.0),
];

/// Resolve `--noise <name>` / `--noise-b <shift>` into a schedule.
pub fn resolve(noise: Option<&str>, noise_b: Option<f64>) -> Result<(String, MixingSchedule), CliError> {
    let (label, b) = match (noise, noise_b) {
        (Some(_), Some(_)) => {
            return Err(CliError::validation(
                "pass either --noise or --noise-b, not both",
            ))
        }
        (Some(name), None) => {
            let b = PRESETS
                .iter()
                .find(|(n, _)| *n == name)
                .map(|(_, b)| *b)
                .ok_or_else(|| {
                    CliError::validation(format!(
                        "unknown noise type {name:?}; expected one of masked, low-uniform, balanced, high-uniform, uniform"
                    ))
                })?;
            (name.to_string(), b)
        }
        (None, Some(b)) => (format!("b={b}"), b),
        (None, None) => ("balanced".to_string(), 0.0),
    };
    let schedule = MixingSchedule::hybrid(b).map_err(|e| CliError::validation(e.to_string()))?;
    Ok((label, schedule))
}

//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScalingError {
    /// Input records failed schema or invariant validation.
    #[error("validation error: {0}")]
    Validation(String),

    /// File or parse failure while loading records.
    #[error("load error: {0}")]
    Load(String),

    /// A fit was requested on insufficient or degenerate data.
    #[error("degenerate fit input: {0}")]
    Degenerate(String),

    /// An iterative fit failed to converge within its budget.
    #[error("fit did not converge: {0}")]
    NoConvergence(String),

    /// A planner input was missing or inconsistent.
    #[error("planner error: {0}")]
    Planner(String),
}

pub type Result<T> = std::result::Result<T, ScalingError>;

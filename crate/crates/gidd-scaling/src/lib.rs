//! Compute-optimal scaling-law estimation and run planning for loss curves
//! logged as run records: iso-FLOP profile extraction with local smoothing,
//! power-law and hyperbola fits with bootstrap confidence intervals,
//! batch-size/learning-rate laws, and a planner that turns a FLOP budget
//! into a training configuration.

pub mod curve;
pub mod error;
pub mod hparams;
pub mod hyperbola;
pub mod isoflop;
pub mod laws;
mod nls;
pub mod planner;
pub mod powerlaw;
pub mod runs;
pub mod synthetic;

pub use curve::LogCurve;
pub use error::{Result, ScalingError};
pub use hparams::{
    anneal_adjust, anneal_invert, completep_lrs, fit_batch_law, fit_lr_law, AnnealedLoss,
    CompletePRules, GroupSettings,
};
pub use hyperbola::{fit_hyperbola, token_optimal, BatchUnit, HyperbolaFit, TokenOptimal};
pub use isoflop::{extract_isoflop, parabola_optimum, IsoFlopPoint, PointSource};
pub use laws::{compute_optimal_laws, OptimalPoint, ScalingLaws};
pub use planner::{plan_run, Beta2Policy, LawFixtures, PlanResult, PlannerLaws};
pub use powerlaw::{
    bootstrap_ci, fit_power_law, power_law_with_ci, ConfidenceLevel, Interval, PowerLawFit,
};
pub use runs::{
    flops_per_token, load_runs_csv, load_runs_jsonl, save_runs_jsonl, validate_runs, FlopMethod,
    ModelSpec, RunPoint, RunRecord,
};

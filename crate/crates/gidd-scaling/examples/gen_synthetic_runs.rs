//! Regenerate the bundled synthetic run records
//! (`fixtures/synthetic_runs.jsonl`): noiseless loss curves from the
//! separable landscape `L = 1.8 + 50 M^-0.4 + 300 D^-0.4`, whose
//! compute-optimal exponents are 0.5/0.5 analytically.
//!
//! Usage: `cargo run -p gidd-scaling --example gen_synthetic_runs [out.jsonl]`

use gidd_scaling::runs::save_runs_jsonl;
use gidd_scaling::synthetic::{generate_runs, SweepConfig, SyntheticLandscape};
use gidd_scaling::FlopMethod;

fn main() {
    let out = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "fixtures/synthetic_runs.jsonl".to_string());
    let landscape = SyntheticLandscape {
        e: 1.8,
        coef_m: 50.0,
        exp_m: 0.4,
        coef_d: 300.0,
        exp_d: 0.4,
    };
    let runs = generate_runs(&landscape, FlopMethod::Method1, &SweepConfig::default())
        .expect("generation");
    save_runs_jsonl(std::path::Path::new(&out), &runs).expect("write");
    eprintln!("wrote {} runs to {out}", runs.len());
}

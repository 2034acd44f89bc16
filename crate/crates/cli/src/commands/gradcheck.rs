use std::time::Instant;

use attnviz::gradcheck::{run_suite, DEFAULT_EPS, TOLERANCE};
use attnviz::Fault;

use crate::failure::Failure;

/// Runs the whole finite-difference suite in double precision.
pub fn run(trials: usize, fault: Option<Fault>) -> Result<(), Failure> {
    let start = Instant::now();
    let reports = run_suite(trials, DEFAULT_EPS, fault)?;
    for r in &reports {
        println!(
            "{:<26} max_rel_error={:.3e} trials={} kink_redraws={} {}",
            r.name,
            r.max_rel_error,
            r.trials,
            r.redraws,
            if r.passed() { "ok" } else { "FAIL" }
        );
    }
    let failed: Vec<String> = reports
        .iter()
        .filter(|r| !r.passed())
        .map(|r| format!("{} ({:.3e})", r.name, r.max_rel_error))
        .collect();
    println!(
        "{} ops, tolerance {TOLERANCE:e}, {:.1}s",
        reports.len(),
        start.elapsed().as_secs_f64()
    );
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Check(format!(
            "gradient check failed for: {}",
            failed.join(", ")
        )))
    }
}

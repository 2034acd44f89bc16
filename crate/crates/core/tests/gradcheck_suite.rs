use attnviz::gradcheck::{run_suite, DEFAULT_EPS, DEFAULT_TRIALS, TOLERANCE};

#[test]
fn every_op_passes_finite_differences() {
    let reports = run_suite(DEFAULT_TRIALS, DEFAULT_EPS, None).unwrap();
    for r in &reports {
        println!(
            "{:<28} max_rel={:.3e} redraws={} {:?}",
            r.name, r.max_rel_error, r.redraws, r.elapsed
        );
    }
    let failed: Vec<_> = reports.iter().filter(|r| !r.passed()).collect();
    assert!(failed.is_empty(), "above {TOLERANCE}: {failed:?}");
}

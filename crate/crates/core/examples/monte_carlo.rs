//! A small Monte Carlo experiment: simulate, estimate and compare the
//! standardized variances with the theory and the efficient bound.
//!
//! ```text
//! cargo run --release --example monte_carlo
//! ```

use diffest::harness::{efficiency_checks, run_experiment, ExperimentConfig};

fn main() -> anyhow::Result<()> {
    let config = ExperimentConfig::from_json(
        r#"{
            "model": {"name": "ou"},
            "theta0": {"alpha": 1.0, "beta": 1.0},
            "estimator": "quad-exact-efficient",
            "n": 5000,
            "replications": 100,
            "master_seed": 11,
            "solver": {"perturb": false}
        }"#,
    )?;
    let experiment = run_experiment(&config)?;
    let report = &experiment.report;
    println!("{}/{} replications converged, delta = {:.5}", report.M_converged, report.M, report.delta.unwrap_or(f64::NAN));
    println!("{}", serde_json::to_string_pretty(&report.summary)?);
    for check in efficiency_checks(report, 0.25, 0.25)? {
        println!(
            "{} {}: {:.3} (target {:.3}, tolerance {})",
            if check.pass { "pass" } else { "FAIL" },
            check.name,
            check.value,
            check.target,
            check.tolerance
        );
    }
    let dir = std::env::temp_dir().join("diffest-monte-carlo-example");
    experiment.write(&dir)?;
    println!("records and summary written to {}", dir.display());
    Ok(())
}

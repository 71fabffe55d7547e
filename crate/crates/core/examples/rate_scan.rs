//! Fits the rate exponent of sd(beta_hat) for a rate-optimal and a
//! non-rate-optimal estimating function. With delta = c n^-0.6 the first
//! decays like n^-1/2, the second like (n delta)^-1/2 = n^-0.2.
//!
//! ```text
//! cargo run --release --example rate_scan
//! ```

use diffest::harness::{rate_scan, ExperimentConfig};

fn main() -> anyhow::Result<()> {
    for estimator in ["quad-exact-efficient", "non-rate-identifiable"] {
        let config = ExperimentConfig::from_json(&format!(
            r#"{{
                "model": {{"name": "ou"}},
                "theta0": {{"alpha": 1.0, "beta": 1.0}},
                "estimator": "{estimator}",
                "sampling": {{"c": 4.0, "rho": 0.6}},
                "n_list": [2000, 4000, 8000, 16000],
                "replications": 100,
                "master_seed": 3,
                "solver": {{"perturb": false}}
            }}"#
        ))?;
        let report = rate_scan(&config)?.report;
        println!("{estimator}");
        for point in report.scan.iter().flatten() {
            println!("  n={:>6} delta={:.4} sd alpha={:.4} sd beta={:.4}", point.n, point.delta, point.sd_alpha.unwrap_or(f64::NAN), point.sd_beta.unwrap_or(f64::NAN));
        }
        if let Some(r) = report.rate_exponents {
            println!("  slopes: alpha {:.3}, beta {:.3}", r.alpha, r.beta);
        }
    }
    Ok(())
}

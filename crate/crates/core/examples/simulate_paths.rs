//! Simulates an Ornstein-Uhlenbeck path with the exact scheme and a CIR path
//! with the Milstein scheme, then prints a few summary numbers.
//!
//! ```text
//! cargo run --example simulate_paths
//! ```

use std::collections::BTreeMap;

use diffest::simulate::{simulate_path, PathSpec};
use diffest::stats::{mean, variance};
use diffest::{builtin_model, ParamPoint, SamplingRule, Scheme};

fn main() -> anyhow::Result<()> {
    let n = 10_000;
    let delta = SamplingRule::new(1.0, 0.6)?.delta(n);

    let ou = builtin_model("ou", &BTreeMap::new())?;
    let theta = ParamPoint::new(1.0, 1.0);
    let path = simulate_path(&*ou, theta, &PathSpec::new(n, delta, 42, Scheme::Exact))?;
    println!(
        "ou  n={} delta={delta:.5} T={:.1} mean={:+.3} var={:.3} (stationary var {:.3})",
        path.n(),
        path.horizon(),
        mean(&path.values),
        variance(&path.values).unwrap_or(f64::NAN),
        theta.beta * theta.beta / (2.0 * theta.alpha),
    );

    let fixed = BTreeMap::from([("m0".to_string(), 1.0)]);
    let cir = builtin_model("cir", &fixed)?;
    let theta = ParamPoint::new(2.0, 0.5);
    let path = simulate_path(&*cir, theta, &PathSpec::new(n, delta, 42, Scheme::Milstein))?;
    println!(
        "cir n={} substeps={} mean={:.3} (m0 = 1) min={:.4}",
        path.n(),
        path.substeps,
        mean(&path.values),
        path.values.iter().copied().fold(f64::INFINITY, f64::min),
    );

    let mut head = Vec::new();
    diffest::SamplePath::from_values(path.values[..5].to_vec(), delta)?.write_csv(&mut head)?;
    print!("{}", String::from_utf8(head)?);
    Ok(())
}

//! Runs the rate-optimality and efficiency checks over the estimator catalog.
//!
//! ```text
//! cargo run --example check_conditions
//! ```

use std::sync::Arc;

use diffest::conditions::{check_efficiency, check_rate_optimality, default_grid};
use diffest::estfun::{catalog, CATALOG};
use diffest::model::OrnsteinUhlenbeck;
use diffest::{Diffusion, ParamPoint};

fn main() -> anyhow::Result<()> {
    let model: Arc<dyn Diffusion> = Arc::new(OrnsteinUhlenbeck);
    let theta = ParamPoint::new(1.0, 1.0);
    let grid = default_grid(&*model, theta)?;

    println!("{:<24} {:>12} {:>12} {:>12} {:>12}", "estimator", "jacobsen", "extra", "drift-eff", "diff-eff");
    for name in CATALOG {
        let ef = catalog(name, model.clone())?;
        let [jac, extra] = check_rate_optimality(&*ef, &*model, theta, &grid, 1e-6)?;
        let [drift, diff] = check_efficiency(&*ef, &*model, theta, &grid, 1e-6)?;
        let cell = |r: &diffest::conditions::ConditionReport| {
            format!("{}{:.1e}", if r.pass { " " } else { "!" }, r.max_residual)
        };
        println!(
            "{name:<24} {:>12} {:>12} {:>12} {:>12}",
            cell(&jac),
            cell(&extra),
            cell(&drift),
            cell(&diff)
        );
    }
    println!("(! marks a violated condition; values are the largest residual on a 21-point grid)");
    Ok(())
}

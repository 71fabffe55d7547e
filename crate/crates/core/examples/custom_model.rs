//! A user-defined diffusion, `dX = -alpha X / sqrt(1 + X^2) dt + beta dW`,
//! estimated with the local-Gaussian score, which needs nothing beyond the
//! drift and diffusion coefficients.
//!
//! ```text
//! cargo run --release --example custom_model
//! ```

use std::sync::Arc;

use diffest::conditions::{check_efficiency, check_rate_optimality, default_grid};
use diffest::estfun::local_gaussian_score_ef;
use diffest::model::CustomDiffusion;
use diffest::simulate::{simulate_path, PathSpec};
use diffest::solve::{solve_estimating_equation, SolveSettings};
use diffest::{Diffusion, ParamPoint, SamplingRule, Scheme, StateInterval};

fn main() -> anyhow::Result<()> {
    let model: Arc<dyn Diffusion> = Arc::new(CustomDiffusion::new(
        "hyperbolic",
        StateInterval::real_line(),
        |x, alpha| -alpha * x / (1.0 + x * x).sqrt(),
        |_, beta| beta,
    ));
    let theta0 = ParamPoint::new(1.5, 0.8);
    let ef = local_gaussian_score_ef(model.clone());

    let grid = default_grid(&*model, theta0)?;
    for r in check_rate_optimality(&ef, &*model, theta0, &grid, 1e-5)?
        .iter()
        .chain(check_efficiency(&ef, &*model, theta0, &grid, 1e-5)?.iter())
    {
        println!("{:<22} max residual {:.1e}", r.condition.to_string(), r.max_residual);
    }

    let n = 10_000;
    let delta = SamplingRule::new(1.0, 0.6)?.delta(n);
    let path = simulate_path(&*model, theta0, &PathSpec::new(n, delta, 5, Scheme::Milstein))?;
    let est = solve_estimating_equation(&ef, &path, &SolveSettings::from_start(ParamPoint::new(1.0, 1.0)))?;
    println!(
        "true ({}, {}), estimate ({:.4}, {:.4}) from T = {:.1}",
        theta0.alpha,
        theta0.beta,
        est.theta_hat.alpha,
        est.theta_hat.beta,
        path.horizon()
    );
    Ok(())
}

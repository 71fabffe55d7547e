//! Godambe-Heyde optimal weights for the basis (x, x^2) and their
//! convergence to the efficient delta-constant weights as delta -> 0.
//!
//! ```text
//! cargo run --example godambe_heyde
//! ```

use std::sync::Arc;

use diffest::estfun::{efficient_weights, gh_optimal_general, Basis, WeightMatrix};
use diffest::model::OrnsteinUhlenbeck;
use diffest::moments::MomentEngine;
use diffest::stats::log_log_slope;
use diffest::{Diffusion, ParamPoint};

fn main() -> anyhow::Result<()> {
    let model: Arc<dyn Diffusion> = Arc::new(OrnsteinUhlenbeck);
    let theta = ParamPoint::new(1.0, 1.0);
    let basis = Basis::monomials(&[1, 2]);
    let gh = gh_optimal_general(model.clone(), basis.clone(), MomentEngine::Exact)?;
    let eff = efficient_weights(model, basis, None)?;
    let deltas = [0.2, 0.1, 0.05, 0.025];

    for x in [-1.0, 0.5, 2.0] {
        let b0 = gh.weights(x, 0.0, theta)?;
        let dist: Vec<f64> = deltas
            .iter()
            .map(|&d| gh.weights(x, d, theta).map(|b| (b - &b0).norm()))
            .collect::<Result<_, _>>()?;
        let m = eff.basis_matrix(x)?;
        println!("x = {x:+.1}");
        println!("  |B(x, delta) - B(x, 0)| = {:?}", dist.iter().map(|d| format!("{d:.2e}")).collect::<Vec<_>>());
        println!("  log-log slope           = {:.3}", log_log_slope(&deltas, &dist));
        let bm = &b0 * &m;
        println!(
            "  B(x, 0) M(x)            = [[{:.6}, {:.6}], [{:.6}, {:.6}]]",
            bm[(0, 0)],
            bm[(0, 1)],
            bm[(1, 0)],
            bm[(1, 1)]
        );
    }
    Ok(())
}

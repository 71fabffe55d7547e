//! Measures the approximate-martingale order of several estimating functions
//! from `E[g(delta, X_delta, x) | X_0 = x]` on a shrinking delta grid.
//!
//! ```text
//! cargo run --release --example martingale_order
//! ```

use std::sync::Arc;

use diffest::conditions::{probe_martingale_order, ProbeEngine, PROBE_DELTAS};
use diffest::estfun::catalog;
use diffest::model::OrnsteinUhlenbeck;
use diffest::{Diffusion, ParamPoint};

fn main() -> anyhow::Result<()> {
    let model: Arc<dyn Diffusion> = Arc::new(OrnsteinUhlenbeck);
    let theta = ParamPoint::new(1.0, 1.0);
    for name in ["euler", "quad-expansion-k2", "quad-expansion-k3", "local-gaussian", "quad-exact-efficient"] {
        let ef = catalog(name, model.clone())?;
        let probe = probe_martingale_order(&*ef, &*model, theta, 2.0, &PROBE_DELTAS, ProbeEngine::Exact)?;
        println!("{name:<22} declared {:<14} fitted ({}, {})", ef.order().to_string(), probe.orders[0], probe.orders[1]);
    }

    // the Monte Carlo engine works for any model, at the price of noise
    let ef = catalog("euler", model.clone())?;
    let probe = probe_martingale_order(&*ef, &*model, theta, 2.0, &PROBE_DELTAS, ProbeEngine::monte_carlo(1))?;
    println!("{:<22} monte carlo    fitted ({}, {})", "euler", probe.orders[0], probe.orders[1]);
    Ok(())
}

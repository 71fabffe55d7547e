//! Builds an efficient estimating function from an arbitrary two-function
//! basis. The weights are constant in delta and only depend on the first two
//! derivatives of the basis.
//!
//! ```text
//! cargo run --example efficient_weights
//! ```

use std::sync::Arc;

use diffest::conditions::{check_efficiency, check_rate_optimality, default_grid};
use diffest::estfun::{basis_ef, efficient_weights, Basis, Coupling};
use diffest::model::{FnField, OrnsteinUhlenbeck};
use diffest::moments::MomentEngine;
use diffest::{Diffusion, ParamPoint};

fn main() -> anyhow::Result<()> {
    let model: Arc<dyn Diffusion> = Arc::new(OrnsteinUhlenbeck);
    let theta = ParamPoint::new(1.0, 1.0);
    let grid = default_grid(&*model, theta)?;

    // f = (x, x^2) with the default coupling, and f = (sin x, x^2 + x) with a
    // nonzero coupling c(x) = 0.3 x
    let cases: Vec<(&str, Basis, Option<Coupling>)> = vec![
        ("(x, x^2), c = 0", Basis::monomials(&[1, 2]), None),
        (
            "(sin x, x^2 + x), c = 0.3 x",
            Basis::new(vec![Arc::new(FnField::new(f64::sin)), Arc::new(FnField::new(|x| x * x + x))]),
            Some(Arc::new(|x: f64, _: ParamPoint| 0.3 * x)),
        ),
    ];
    for (label, basis, coupling) in cases {
        let weights = efficient_weights(model.clone(), basis.clone(), coupling)?;
        let engine = MomentEngine::Expansion(3);
        let ef = basis_ef(model.clone(), basis, Arc::new(weights), engine)?.named(label);
        let rate = check_rate_optimality(&ef, &*model, theta, &grid, 1e-6)?;
        let eff = check_efficiency(&ef, &*model, theta, &grid, 1e-6)?;
        println!("{label}");
        for r in rate.iter().chain(eff.iter()) {
            println!("  {:<22} {}", r.condition.to_string(), r.summary);
        }
    }
    Ok(())
}

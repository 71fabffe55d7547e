//! Limit quantities of several estimators on a CIR model, compared with the
//! efficient bound, plus the identification curve of the drift parameter.
//!
//! ```text
//! cargo run --release --example asymptotics
//! ```

use std::sync::Arc;

use diffest::estfun::catalog;
use diffest::inference::{efficient_bound, gamma_curve, theoretical_asymptotics};
use diffest::model::Cir;
use diffest::{Diffusion, ParamPoint};

fn main() -> anyhow::Result<()> {
    let model: Arc<dyn Diffusion> = Arc::new(Cir::new(1.0)?);
    let theta0 = ParamPoint::new(1.0, 0.5);
    let bound = efficient_bound(&*model, theta0)?;
    println!("efficient bound diag({:.4}, {:.4})", bound[0][0], bound[1][1]);

    for name in ["quad-exact-efficient", "gh-quadratic", "euler", "local-gaussian", "quad-expansion-k2"] {
        let ef = catalog(name, model.clone())?;
        let r = theoretical_asymptotics(&*ef, &*model, theta0, theta0)?;
        println!(
            "{name:<22} S11={:.4} S22={:.4} W1={:.4} W2={:.4} var alpha={:.4} var beta={:.4}",
            r.S[0][0], r.S[1][1], r.W1, r.W2, r.cov_rate_optimal[0][0], r.cov_rate_optimal[1][1]
        );
    }

    let ef = catalog("quad-exact-efficient", model.clone())?;
    let points: Vec<ParamPoint> = (0..=4).map(|k| ParamPoint::new(0.5 + 0.25 * k as f64, theta0.beta)).collect();
    for (p, g) in points.iter().zip(gamma_curve(&*ef, &*model, theta0, &points)?) {
        println!("gamma(alpha = {:.2}) = ({:+.4}, {:+.4})", p.alpha, g[0], g[1]);
    }
    Ok(())
}

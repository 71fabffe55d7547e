//! Estimating functions `g(delta, y, x; theta)` and their sums over a path.
//!
//! Every constructor fixes a canonical *version* (the normalization of the
//! second coordinate) so that the rate-optimality and efficiency conditions
//! can be checked at `delta = 0`; [`EstimatingFunction::version_note`]
//! states the one in use.

mod basis;
mod basis_ef;
mod local_gaussian;
mod quadratic;
mod weights;

use std::fmt;
use std::sync::Arc;

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Diffusion, ParamPoint};
use crate::moments::MomentEngine;

pub use basis::Basis;
pub use basis_ef::{basis_ef, BasisEf};
pub use local_gaussian::{local_gaussian_score_ef, LocalGaussianEf};
pub use quadratic::{
    constant_weight_quadratic_ef, euler_ef, gh_optimal_quadratic, non_rate_optimal_ef, quadratic_ef,
    QuadraticEf, QuadraticWeights, ScalarWeight,
};
pub use weights::{efficient_weights, gh_optimal_general, Coupling, EfficientWeights, GodambeHeydeWeights, WeightMatrix};

/// Declared approximate-martingale order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MartingaleOrder {
    /// `E[g(delta, X_delta, x) | X_0 = x] = 0`.
    Exact,
    /// The conditional mean is `O(delta^kappa)`.
    Approximate(u32),
}

impl fmt::Display for MartingaleOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MartingaleOrder::Exact => write!(f, "exact"),
            MartingaleOrder::Approximate(k) => write!(f, "{k}"),
        }
    }
}

impl From<MomentEngine> for MartingaleOrder {
    fn from(e: MomentEngine) -> Self {
        match e {
            MomentEngine::Exact => MartingaleOrder::Exact,
            MomentEngine::Expansion(k) => MartingaleOrder::Approximate(k),
        }
    }
}

pub trait EstimatingFunction: Send + Sync {
    fn name(&self) -> &str;

    fn model(&self) -> &dyn Diffusion;

    /// `g(delta, y, x; theta)`; defined (and finite) at `delta = 0`.
    fn eval(&self, delta: f64, y: f64, x: f64, theta: ParamPoint) -> Result<Vector2<f64>>;

    /// `d g / d theta^T`, column `k` is the derivative in parameter `k`.
    fn jac_theta(&self, delta: f64, y: f64, x: f64, theta: ParamPoint) -> Result<Matrix2<f64>> {
        finite_difference_jacobian(self, delta, y, x, theta)
    }

    fn eval_with_jac(
        &self,
        delta: f64,
        y: f64,
        x: f64,
        theta: ParamPoint,
    ) -> Result<(Vector2<f64>, Matrix2<f64>)> {
        Ok((self.eval(delta, y, x, theta)?, self.jac_theta(delta, y, x, theta)?))
    }

    fn order(&self) -> MartingaleOrder;

    fn version_note(&self) -> &str;
}

impl fmt::Debug for dyn EstimatingFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EstimatingFunction")
            .field("name", &self.name())
            .field("model", &self.model().name())
            .field("order", &self.order())
            .finish()
    }
}

/// Central differences in each parameter, step `1e-6 * max(1, |theta_k|)`.
pub fn finite_difference_jacobian<E: EstimatingFunction + ?Sized>(
    ef: &E,
    delta: f64,
    y: f64,
    x: f64,
    theta: ParamPoint,
) -> Result<Matrix2<f64>> {
    let mut j = Matrix2::zeros();
    for k in 0..2 {
        let h = 1e-6 * theta.get(k).abs().max(1.0);
        let up = ef.eval(delta, y, x, theta.shifted(k, h))?;
        let dn = ef.eval(delta, y, x, theta.shifted(k, -h))?;
        j.set_column(k, &((up - dn) / (2.0 * h)));
    }
    Ok(j)
}

/// `G_n(theta) = sum_i g(delta, X_i, X_{i-1}; theta)` over consecutive values.
pub fn eval_g_values(ef: &dyn EstimatingFunction, values: &[f64], delta: f64, theta: ParamPoint) -> Result<Vector2<f64>> {
    if values.len() < 2 {
        return Err(Error::InsufficientData(format!("{} observations, need at least 2", values.len())));
    }
    let mut g = Vector2::zeros();
    for w in values.windows(2) {
        g += ef.eval(delta, w[1], w[0], theta)?;
    }
    Ok(g)
}

/// `G_n` and its parameter Jacobian in one sweep.
pub fn eval_g_with_jac(
    ef: &dyn EstimatingFunction,
    values: &[f64],
    delta: f64,
    theta: ParamPoint,
) -> Result<(Vector2<f64>, Matrix2<f64>)> {
    if values.len() < 2 {
        return Err(Error::InsufficientData(format!("{} observations, need at least 2", values.len())));
    }
    let mut g = Vector2::zeros();
    let mut j = Matrix2::zeros();
    for w in values.windows(2) {
        let (gi, ji) = ef.eval_with_jac(delta, w[1], w[0], theta)?;
        g += gi;
        j += ji;
    }
    Ok((g, j))
}

/// `G_n(theta)` on a sample path (unnormalized).
#[allow(non_snake_case)]
pub fn eval_G(ef: &dyn EstimatingFunction, path: &crate::simulate::SamplePath, theta: ParamPoint) -> Result<Vector2<f64>> {
    eval_g_values(ef, &path.values, path.delta, theta)
}

/// Catalog names accepted by [`catalog`].
pub const CATALOG: [&str; 8] = [
    "quad-exact-efficient",
    "quad-expansion-k2",
    "euler",
    "gh-quadratic",
    "gh-general",
    "local-gaussian",
    "non-rate-control",
    "non-rate-identifiable",
];

/// Instantiates a catalog estimating function for `model`.
///
/// Besides [`CATALOG`], `quad-expansion-k{kappa}` is accepted for
/// `kappa` in `2..=4`.
pub fn catalog(name: &str, model: Arc<dyn Diffusion>) -> Result<Arc<dyn EstimatingFunction>> {
    let ef: Arc<dyn EstimatingFunction> = match name {
        "quad-exact-efficient" => Arc::new(quadratic_ef(model, QuadraticWeights::Efficient, MomentEngine::Exact)?.named(name)),
        "euler" => Arc::new(euler_ef(model)),
        "gh-quadratic" => Arc::new(gh_optimal_quadratic(model)?),
        "gh-general" => {
            let engine = if model.gaussian_transition() { MomentEngine::Exact } else { MomentEngine::Expansion(4) };
            let w = gh_optimal_general(model.clone(), Basis::monomials(&[1, 2]), engine)?;
            Arc::new(basis_ef(model, Basis::monomials(&[1, 2]), Arc::new(w), engine)?.named(name))
        }
        "local-gaussian" => Arc::new(local_gaussian_score_ef(model)),
        "non-rate-control" => Arc::new(
            non_rate_optimal_ef(model, ScalarWeight::constant(1.0), ScalarWeight::constant(1.0))?.named(name),
        ),
        "non-rate-identifiable" => Arc::new(
            non_rate_optimal_ef(model, ScalarWeight::drift_efficient(), ScalarWeight::new(|x, _, _| 1.0 + x * x))?
                .named(name),
        ),
        other => {
            let kappa = other
                .strip_prefix("quad-expansion-k")
                .and_then(|k| k.parse::<u32>().ok())
                .ok_or_else(|| Error::UnknownEstimator(other.to_string()))?;
            let engine = MomentEngine::expansion(kappa)?;
            Arc::new(quadratic_ef(model, QuadraticWeights::Efficient, engine)?.named(name))
        }
    };
    Ok(ef)
}

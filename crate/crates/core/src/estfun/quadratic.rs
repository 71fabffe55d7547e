use std::fmt;
use std::sync::Arc;

use nalgebra::{Matrix2, Vector2};

use super::{EstimatingFunction, MartingaleOrder, WeightMatrix};
use crate::error::{Error, Result};
use crate::model::{ConditionalMoments, Diffusion, ParamPoint};
use crate::moments::{conditional_moments, MomentEngine};

/// A scalar weight `a(x, delta; theta)`.
#[derive(Clone)]
pub enum ScalarWeight {
    Constant(f64),
    /// `d_alpha b / v`
    DriftEfficient,
    /// `d_beta v / (2 v^2)`
    DiffusionEfficient,
    Custom(Arc<dyn Fn(f64, f64, ParamPoint) -> f64 + Send + Sync>),
}

impl ScalarWeight {
    pub fn constant(c: f64) -> Self {
        ScalarWeight::Constant(c)
    }

    pub fn drift_efficient() -> Self {
        ScalarWeight::DriftEfficient
    }

    pub fn diffusion_efficient() -> Self {
        ScalarWeight::DiffusionEfficient
    }

    /// Weight from a closure of `(x, delta, theta)`.
    pub fn new(f: impl Fn(f64, f64, ParamPoint) -> f64 + Send + Sync + 'static) -> Self {
        ScalarWeight::Custom(Arc::new(f))
    }

    fn eval(&self, model: &dyn Diffusion, x: f64, delta: f64, theta: ParamPoint) -> f64 {
        match self {
            ScalarWeight::Constant(c) => *c,
            ScalarWeight::DriftEfficient => {
                model.drift_dalpha(x, theta.alpha) / model.diffusion_sq(x, theta.beta)
            }
            ScalarWeight::DiffusionEfficient => {
                let v = model.diffusion_sq(x, theta.beta);
                model.diffusion_sq_dbeta(x, theta.beta) / (2.0 * v * v)
            }
            ScalarWeight::Custom(f) => f(x, delta, theta),
        }
    }

    fn is_constant(&self) -> bool {
        matches!(self, ScalarWeight::Constant(_))
    }
}

impl fmt::Debug for ScalarWeight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarWeight::Constant(c) => write!(f, "Constant({c})"),
            ScalarWeight::DriftEfficient => write!(f, "DriftEfficient"),
            ScalarWeight::DiffusionEfficient => write!(f, "DiffusionEfficient"),
            ScalarWeight::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// Weights of a quadratic estimating function.
#[derive(Clone)]
pub enum QuadraticWeights {
    /// `a_1 = d_alpha b / v`, `a_2 = d_beta v / (2 v^2)`.
    Efficient,
    /// `a_1 = d_alpha F / phi`, `a_2 = delta d_beta phi / (2 phi^2)`, with
    /// the efficient weights as the `delta = 0` limit.
    GodambeHeyde,
    Diagonal(ScalarWeight, ScalarWeight),
    /// A full 2 x 2 matrix acting on `(y - F, (y - F)^2 - phi)`.
    Matrix(Arc<dyn WeightMatrix>),
}

impl fmt::Debug for QuadraticWeights {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QuadraticWeights::Efficient => write!(f, "Efficient"),
            QuadraticWeights::GodambeHeyde => write!(f, "GodambeHeyde"),
            QuadraticWeights::Diagonal(a, b) => write!(f, "Diagonal({a:?}, {b:?})"),
            QuadraticWeights::Matrix(_) => write!(f, "Matrix"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum MomentSource {
    Engine(MomentEngine),
    /// `F = x + b delta`, `phi = v delta`.
    Euler,
}

/// `g = A(x) (y - F, (y - F)^2 - phi)` or, in the uncentered form,
/// `g = A(x) (y - F, y^2 - (phi + F^2))`.
#[derive(Clone)]
pub struct QuadraticEf {
    model: Arc<dyn Diffusion>,
    weights: QuadraticWeights,
    source: MomentSource,
    centered: bool,
    name: String,
    note: String,
}

impl fmt::Debug for QuadraticEf {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("QuadraticEf")
            .field("name", &self.name)
            .field("model", &self.model.name())
            .field("weights", &self.weights)
            .field("source", &self.source)
            .field("centered", &self.centered)
            .finish()
    }
}

fn require_exact(model: &dyn Diffusion) -> Result<()> {
    let probe = model.exact_moments(0.1, model.anchor(), ParamPoint::new(1.0, 1.0));
    if probe.is_none() {
        return Err(Error::MissingExactMoments(model.name().to_string()));
    }
    Ok(())
}

const VERSION_PLAIN: &str = "second coordinate as given; weights carry any delta factors";

/// Quadratic estimating function with conditional moments from `engine`.
pub fn quadratic_ef(model: Arc<dyn Diffusion>, weights: QuadraticWeights, engine: MomentEngine) -> Result<QuadraticEf> {
    match engine {
        MomentEngine::Exact => require_exact(&*model)?,
        MomentEngine::Expansion(k) => {
            MomentEngine::expansion(k)?;
        }
    }
    if matches!(weights, QuadraticWeights::GodambeHeyde) {
        require_exact(&*model)?;
    }
    Ok(QuadraticEf {
        model,
        weights,
        source: MomentSource::Engine(engine),
        centered: true,
        name: format!("quadratic-{engine}"),
        note: VERSION_PLAIN.to_string(),
    })
}

/// Quadratic estimating function with constant weights `(a1, a2)` and exact moments.
pub fn constant_weight_quadratic_ef(model: Arc<dyn Diffusion>, a1: f64, a2: f64) -> Result<QuadraticEf> {
    Ok(quadratic_ef(
        model,
        QuadraticWeights::Diagonal(ScalarWeight::constant(a1), ScalarWeight::constant(a2)),
        MomentEngine::Exact,
    )?
    .named("constant-weight-quadratic"))
}

/// Euler pseudo-score: `F = x + b delta`, `phi = v delta`, efficient weights.
pub fn euler_ef(model: Arc<dyn Diffusion>) -> QuadraticEf {
    QuadraticEf {
        model,
        weights: QuadraticWeights::Efficient,
        source: MomentSource::Euler,
        centered: true,
        name: "euler".into(),
        note: "Euler pseudo-score with the second coordinate multiplied by delta".into(),
    }
}

/// Optimal quadratic martingale estimating function (exact moments).
pub fn gh_optimal_quadratic(model: Arc<dyn Diffusion>) -> Result<QuadraticEf> {
    require_exact(&*model)?;
    Ok(QuadraticEf {
        model,
        weights: QuadraticWeights::GodambeHeyde,
        source: MomentSource::Engine(MomentEngine::Exact),
        centered: true,
        name: "gh-quadratic".into(),
        note: "Godambe-Heyde optimal quadratic weights with the second coordinate multiplied by delta/2".into(),
    })
}

/// Martingale estimating function with an uncentered second moment,
/// `g_2 = a_2 (y^2 - phi - F^2)`; not rate optimal in general.
pub fn non_rate_optimal_ef(model: Arc<dyn Diffusion>, a1: ScalarWeight, a2: ScalarWeight) -> Result<QuadraticEf> {
    require_exact(&*model)?;
    Ok(QuadraticEf {
        model,
        weights: QuadraticWeights::Diagonal(a1, a2),
        source: MomentSource::Engine(MomentEngine::Exact),
        centered: false,
        name: "non-rate".into(),
        note: VERSION_PLAIN.to_string(),
    })
}

impl QuadraticEf {
    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn weights_kind(&self) -> &QuadraticWeights {
        &self.weights
    }

    fn moments(&self, delta: f64, x: f64, theta: ParamPoint) -> Result<ConditionalMoments> {
        match self.source {
            MomentSource::Engine(e) => conditional_moments(&*self.model, e, delta, x, theta),
            MomentSource::Euler => {
                let m = &*self.model;
                Ok(ConditionalMoments {
                    mean: x + m.drift(x, theta.alpha) * delta,
                    var: m.diffusion_sq(x, theta.beta) * delta,
                    dmean: [m.drift_dalpha(x, theta.alpha) * delta, 0.0],
                    dvar: [0.0, m.diffusion_sq_dbeta(x, theta.beta) * delta],
                })
            }
        }
    }

    fn weight_matrix(&self, x: f64, delta: f64, theta: ParamPoint) -> Result<Matrix2<f64>> {
        let m = &*self.model;
        let diag = |a: f64, b: f64| Matrix2::new(a, 0.0, 0.0, b);
        match &self.weights {
            QuadraticWeights::Efficient => Ok(diag(
                ScalarWeight::DriftEfficient.eval(m, x, delta, theta),
                ScalarWeight::DiffusionEfficient.eval(m, x, delta, theta),
            )),
            QuadraticWeights::GodambeHeyde => {
                if delta == 0.0 {
                    return Ok(diag(
                        ScalarWeight::DriftEfficient.eval(m, x, delta, theta),
                        ScalarWeight::DiffusionEfficient.eval(m, x, delta, theta),
                    ));
                }
                let mo = conditional_moments(m, MomentEngine::Exact, delta, x, theta)?;
                Ok(diag(mo.dmean[0] / mo.var, delta * mo.dvar[1] / (2.0 * mo.var * mo.var)))
            }
            QuadraticWeights::Diagonal(a, b) => Ok(diag(a.eval(m, x, delta, theta), b.eval(m, x, delta, theta))),
            QuadraticWeights::Matrix(w) => {
                let a = w.weights(x, delta, theta)?;
                if a.shape() != (2, 2) {
                    return Err(Error::InvalidConfig(format!(
                        "quadratic weights must be 2 x 2, got {:?}",
                        a.shape()
                    )));
                }
                Ok(Matrix2::new(a[(0, 0)], a[(0, 1)], a[(1, 0)], a[(1, 1)]))
            }
        }
    }

    fn weights_constant_in_theta(&self) -> bool {
        matches!(&self.weights, QuadraticWeights::Diagonal(a, b) if a.is_constant() && b.is_constant())
    }

    fn residuals(&self, y: f64, m: &ConditionalMoments) -> Vector2<f64> {
        let e = y - m.mean;
        if self.centered {
            Vector2::new(e, e * e - m.var)
        } else {
            Vector2::new(e, y * y - (m.var + m.mean * m.mean))
        }
    }
}

impl EstimatingFunction for QuadraticEf {
    fn name(&self) -> &str {
        &self.name
    }

    fn model(&self) -> &dyn Diffusion {
        &*self.model
    }

    fn eval(&self, delta: f64, y: f64, x: f64, theta: ParamPoint) -> Result<Vector2<f64>> {
        let m = self.moments(delta, x, theta)?;
        Ok(self.weight_matrix(x, delta, theta)? * self.residuals(y, &m))
    }

    fn jac_theta(&self, delta: f64, y: f64, x: f64, theta: ParamPoint) -> Result<Matrix2<f64>> {
        Ok(self.eval_with_jac(delta, y, x, theta)?.1)
    }

    fn eval_with_jac(
        &self,
        delta: f64,
        y: f64,
        x: f64,
        theta: ParamPoint,
    ) -> Result<(Vector2<f64>, Matrix2<f64>)> {
        let m = self.moments(delta, x, theta)?;
        let a = self.weight_matrix(x, delta, theta)?;
        let h = self.residuals(y, &m);
        let mut jac = Matrix2::zeros();
        for k in 0..2 {
            let dh = if self.centered {
                let e = y - m.mean;
                Vector2::new(-m.dmean[k], -2.0 * e * m.dmean[k] - m.dvar[k])
            } else {
                Vector2::new(-m.dmean[k], -(m.dvar[k] + 2.0 * m.mean * m.dmean[k]))
            };
            let mut col = a * dh;
            if !self.weights_constant_in_theta() {
                let step = 1e-6 * theta.get(k).abs().max(1.0);
                let up = self.weight_matrix(x, delta, theta.shifted(k, step))?;
                let dn = self.weight_matrix(x, delta, theta.shifted(k, -step))?;
                col += (up - dn) / (2.0 * step) * h;
            }
            jac.set_column(k, &col);
        }
        Ok((a * h, jac))
    }

    fn order(&self) -> MartingaleOrder {
        match self.source {
            MomentSource::Engine(e) => e.into(),
            MomentSource::Euler => MartingaleOrder::Approximate(2),
        }
    }

    fn version_note(&self) -> &str {
        &self.note
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::OrnsteinUhlenbeck;
    use approx::assert_abs_diff_eq;

    const OU11: ParamPoint = ParamPoint { alpha: 1.0, beta: 1.0 };

    fn ou() -> Arc<dyn Diffusion> {
        Arc::new(OrnsteinUhlenbeck)
    }

    #[test]
    fn efficient_quadratic_values() {
        let ef = quadratic_ef(ou(), QuadraticWeights::Efficient, MomentEngine::Exact).unwrap();
        let g = ef.eval(0.1, 2.0, 2.0, OU11).unwrap();
        let f = 2.0 * (-0.1f64).exp();
        let phi = -(-0.2f64).exp_m1() / 2.0;
        assert_abs_diff_eq!(g[0], -2.0 * (2.0 - f), epsilon = 1e-14);
        assert_abs_diff_eq!(g[0], -0.380_650_3, epsilon = 1e-7);
        assert_abs_diff_eq!(g[1], (2.0 - f).powi(2) - phi, epsilon = 1e-14);
        assert_abs_diff_eq!(g[1], -0.054_411_0, epsilon = 1e-7);
        // centered at the conditional mean
        assert_abs_diff_eq!(ef.eval(0.1, f, 2.0, OU11).unwrap()[0], 0.0);
    }

    #[test]
    fn euler_values() {
        let ef = euler_ef(ou());
        let g = ef.eval(0.1, 2.0, 2.0, OU11).unwrap();
        assert_abs_diff_eq!(g[0], -0.4, epsilon = 1e-14);
        assert_abs_diff_eq!(g[1], 0.5 * 2.0 * (0.04 - 0.1), epsilon = 1e-14);
        assert_eq!(ef.order(), MartingaleOrder::Approximate(2));
    }

    #[test]
    fn gh_quadratic_weights() {
        let ef = gh_optimal_quadratic(ou()).unwrap();
        let a = ef.weight_matrix(2.0, 0.1, OU11).unwrap();
        assert_abs_diff_eq!(a[(0, 0)], -1.996_670_6, epsilon = 1e-6);
        assert_abs_diff_eq!(a[(1, 1)], 1.103_331_1, epsilon = 1e-6);
        let small = ef.weight_matrix(2.0, 1e-7, OU11).unwrap();
        let limit = ef.weight_matrix(2.0, 0.0, OU11).unwrap();
        assert_abs_diff_eq!(small[(0, 0)], limit[(0, 0)], epsilon = 1e-5);
        assert_abs_diff_eq!(small[(1, 1)], limit[(1, 1)], epsilon = 1e-5);
        assert_abs_diff_eq!(limit[(0, 0)], -2.0);
        assert_abs_diff_eq!(limit[(1, 1)], 1.0);
    }

    #[test]
    fn non_rate_control_values() {
        let ef = non_rate_optimal_ef(ou(), ScalarWeight::constant(1.0), ScalarWeight::constant(1.0)).unwrap();
        let m = OrnsteinUhlenbeck.exact_moments(0.1, 2.0, OU11).unwrap();
        let g = ef.eval(0.1, 2.5, 2.0, OU11).unwrap();
        assert_abs_diff_eq!(g[1], 6.25 - m.var - m.mean * m.mean, epsilon = 1e-14);
        assert_eq!(ef.eval(0.0, 2.0, 2.0, OU11).unwrap(), Vector2::zeros());
    }

    #[test]
    fn missing_exact_moments() {
        let custom: Arc<dyn Diffusion> = Arc::new(crate::model::CustomDiffusion::new(
            "c",
            crate::model::StateInterval::real_line(),
            |x, a| -a * x,
            |_, b| b,
        ));
        assert!(matches!(gh_optimal_quadratic(custom.clone()), Err(Error::MissingExactMoments(_))));
        assert!(quadratic_ef(custom, QuadraticWeights::Efficient, MomentEngine::Expansion(2)).is_ok());
    }
}

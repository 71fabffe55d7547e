use std::fmt;
use std::sync::Arc;

use nalgebra::Vector2;

use super::{EstimatingFunction, MartingaleOrder};
use crate::error::Result;
use crate::model::{Diffusion, ParamPoint};

/// Pseudo-score of the small-`delta` density approximation
///
/// ```text
/// r = (2 pi v(y) delta)^{-1/2} exp(-(k(y) - k(x))^2 / (2 delta) + m(y) - m(x) - log(sigma(y)/sigma(x)) / 2)
/// ```
///
/// with `k = int 1/sigma`, `m = int b/v`. `g_1 = d_alpha log r - delta L(d_alpha m)(x)`
/// (the compensator removes the first-order conditional bias) and
/// `g_2 = delta d_beta log r`.
#[derive(Clone)]
pub struct LocalGaussianEf {
    model: Arc<dyn Diffusion>,
}

impl fmt::Debug for LocalGaussianEf {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LocalGaussianEf").field("model", &self.model.name()).finish()
    }
}

pub fn local_gaussian_score_ef(model: Arc<dyn Diffusion>) -> LocalGaussianEf {
    LocalGaussianEf { model }
}

impl LocalGaussianEf {
    /// `L(d_alpha m)(x) = b q + v q' / 2` with `q = d_alpha b / v`.
    fn compensator(&self, x: f64, theta: ParamPoint) -> f64 {
        let c = self.model.jets(x, theta, 1);
        let v = c.diffusion_sq.value();
        let q = c.drift_dalpha.value() / v;
        let dq = c.drift_dalpha.deriv(1) / v - c.drift_dalpha.value() * c.diffusion_sq.deriv(1) / (v * v);
        c.drift.value() * q + 0.5 * v * dq
    }
}

impl EstimatingFunction for LocalGaussianEf {
    fn name(&self) -> &str {
        "local-gaussian"
    }

    fn model(&self) -> &dyn Diffusion {
        &*self.model
    }

    fn eval(&self, delta: f64, y: f64, x: f64, theta: ParamPoint) -> Result<Vector2<f64>> {
        let iv = self.model.interval();
        iv.check(x)?;
        iv.check(y)?;
        let inc = self.model.lamperti_increments(x, y, theta)?;
        let mut g1 = inc.dm_alpha;
        let mut g2 = -inc.dk * inc.dk_beta;
        if delta != 0.0 {
            let dlog_sigma = |z: f64| {
                0.5 * self.model.diffusion_sq_dbeta(z, theta.beta) / self.model.diffusion_sq(z, theta.beta)
            };
            g1 -= delta * self.compensator(x, theta);
            g2 += delta * (inc.dm_beta - 1.5 * dlog_sigma(y) + 0.5 * dlog_sigma(x));
        }
        Ok(Vector2::new(g1, g2))
    }

    fn order(&self) -> MartingaleOrder {
        MartingaleOrder::Approximate(2)
    }

    fn version_note(&self) -> &str {
        "pseudo-score of the local Gaussian density; second coordinate multiplied by delta"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::OrnsteinUhlenbeck;
    use approx::assert_abs_diff_eq;

    #[test]
    fn leading_terms_on_ou() {
        let ef = local_gaussian_score_ef(Arc::new(OrnsteinUhlenbeck));
        let g = ef.eval(0.0, 2.0, 1.0, ParamPoint::new(1.0, 1.0)).unwrap();
        assert_abs_diff_eq!(g[0], -1.5, epsilon = 1e-14);
        assert_abs_diff_eq!(g[1], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn score_of_log_density() {
        // compare with a numerical derivative of log r at delta > 0
        let model = OrnsteinUhlenbeck;
        let (delta, x, y) = (0.05, 0.7, 1.1);
        let log_r = |t: ParamPoint| {
            let v = model.diffusion_sq(y, t.beta);
            let k = |z: f64| z / t.beta;
            let m = |z: f64| -t.alpha * z * z / (2.0 * t.beta * t.beta);
            -0.5 * (2.0 * std::f64::consts::PI * v * delta).ln() - (k(y) - k(x)).powi(2) / (2.0 * delta) + m(y) - m(x)
                - 0.5 * (model.diffusion(y, t.beta) / model.diffusion(x, t.beta)).ln()
        };
        let theta = ParamPoint::new(1.2, 0.9);
        let ef = local_gaussian_score_ef(Arc::new(OrnsteinUhlenbeck));
        let g = ef.eval(delta, y, x, theta).unwrap();
        let h = 1e-6;
        let da = (log_r(theta.shifted(0, h)) - log_r(theta.shifted(0, -h))) / (2.0 * h);
        let db = (log_r(theta.shifted(1, h)) - log_r(theta.shifted(1, -h))) / (2.0 * h);
        // compensator for OU: L(d_alpha m)(x) = (alpha x^2 - beta^2/2) / beta^2 ... times delta
        let comp = (theta.alpha * x * x - 0.5 * theta.beta * theta.beta) / (theta.beta * theta.beta);
        assert_abs_diff_eq!(g[0], da - delta * comp, epsilon = 1e-8);
        assert_abs_diff_eq!(g[1], delta * db, epsilon = 1e-8);
    }
}

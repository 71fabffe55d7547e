use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use super::{
    CoefficientJets, ConditionalMoments, Diffusion, LampertiIncrements, ParamPoint, StateInterval,
};
use crate::error::{Error, Result};
use crate::jet::{self, Jet};

/// `(1 - exp(-u)) / u`, continuous at `u = 0`.
fn one_minus_exp_ratio(u: f64) -> f64 {
    if u.abs() < 1e-8 {
        1.0 - 0.5 * u
    } else {
        -(-u).exp_m1() / u
    }
}

/// `(u e^-u + expm1(-u)) / u^2`, series near zero to avoid cancellation.
fn variance_alpha_kernel(u: f64) -> f64 {
    if u.abs() < 0.5 {
        // sum_{k>=2} (-1)^(k-1) (k-1)/k! u^(k-2)
        let mut sum = 0.0;
        let mut fact = 1.0;
        let mut pow = 1.0;
        for k in 2..24 {
            fact *= k as f64;
            let sign = if k % 2 == 0 { -1.0 } else { 1.0 };
            sum += sign * (k - 1) as f64 / fact * pow;
            pow *= u;
        }
        sum
    } else {
        (u * (-u).exp() + (-u).exp_m1()) / (u * u)
    }
}

/// Ornstein-Uhlenbeck: `dX = -alpha X dt + beta dW` on the real line.
#[derive(Clone, Copy, Debug, Default)]
pub struct OrnsteinUhlenbeck;

impl Diffusion for OrnsteinUhlenbeck {
    fn name(&self) -> &str {
        "ou"
    }

    fn interval(&self) -> StateInterval {
        StateInterval::real_line()
    }

    fn drift(&self, x: f64, alpha: f64) -> f64 {
        -alpha * x
    }

    fn diffusion_sq(&self, _x: f64, beta: f64) -> f64 {
        beta * beta
    }

    fn diffusion(&self, _x: f64, beta: f64) -> f64 {
        beta.abs()
    }

    fn drift_dalpha(&self, x: f64, _alpha: f64) -> f64 {
        -x
    }

    fn diffusion_sq_dbeta(&self, _x: f64, beta: f64) -> f64 {
        2.0 * beta
    }

    fn jets(&self, x: f64, theta: ParamPoint, order: usize) -> CoefficientJets {
        let (a, b) = (theta.alpha, theta.beta);
        CoefficientJets {
            drift: Jet::new(&[-a * x, -a]).pad(order),
            diffusion_sq: Jet::constant(b * b, order),
            drift_dalpha: Jet::new(&[-x, -1.0]).pad(order),
            diffusion_sq_dbeta: Jet::constant(2.0 * b, order),
        }
    }

    fn exact_moments(&self, delta: f64, x: f64, theta: ParamPoint) -> Option<ConditionalMoments> {
        let (a, b) = (theta.alpha, theta.beta);
        let e = (-a * delta).exp();
        let u = 2.0 * a * delta;
        let var = b * b * delta * one_minus_exp_ratio(u);
        Some(ConditionalMoments {
            mean: x * e,
            var,
            dmean: [-delta * x * e, 0.0],
            dvar: [2.0 * b * b * delta * delta * variance_alpha_kernel(u), 2.0 * var / b],
        })
    }

    fn gaussian_transition(&self) -> bool {
        true
    }

    fn analytic_derivatives(&self) -> bool {
        true
    }

    fn anchor(&self) -> f64 {
        0.0
    }

    fn log_unnormalized_density(&self, x: f64, theta: ParamPoint) -> Result<f64> {
        let v = theta.beta * theta.beta;
        Ok(-theta.alpha * x * x / v - v.ln())
    }

    fn sample_stationary(&self, theta: ParamPoint, rng: &mut dyn RngCore) -> Option<f64> {
        if theta.alpha <= 0.0 {
            return None;
        }
        let sd = theta.beta.abs() / (2.0 * theta.alpha).sqrt();
        let z: f64 = rng.sample(StandardNormal);
        Some(sd * z)
    }

    fn lamperti_increments(&self, x: f64, y: f64, theta: ParamPoint) -> Result<LampertiIncrements> {
        let (a, b) = (theta.alpha, theta.beta);
        let sq = y * y - x * x;
        Ok(LampertiIncrements {
            dk: (y - x) / b,
            dk_beta: -(y - x) / (b * b),
            dm_alpha: -sq / (2.0 * b * b),
            dm_beta: a * sq / (b * b * b),
        })
    }

    fn validate(&self, theta: ParamPoint) -> Result<()> {
        if !theta.is_finite() || theta.alpha <= 0.0 || theta.beta == 0.0 {
            return Err(Error::InvalidParameter(format!(
                "ou needs alpha > 0 and beta != 0, got {theta:?}"
            )));
        }
        Ok(())
    }
}

/// Cox-Ingersoll-Ross with fixed long-run mean:
/// `dX = alpha (m0 - X) dt + beta sqrt(X) dW` on `(0, inf)`.
#[derive(Clone, Copy, Debug)]
pub struct Cir {
    mean: f64,
}

impl Cir {
    pub fn new(mean: f64) -> Result<Self> {
        if !(mean.is_finite() && mean > 0.0) {
            return Err(Error::InvalidModelConstant(format!("cir needs m0 > 0, got {mean}")));
        }
        Ok(Cir { mean })
    }

    pub fn long_run_mean(&self) -> f64 {
        self.mean
    }
}

impl Diffusion for Cir {
    fn name(&self) -> &str {
        "cir"
    }

    fn interval(&self) -> StateInterval {
        StateInterval::positive()
    }

    fn drift(&self, x: f64, alpha: f64) -> f64 {
        alpha * (self.mean - x)
    }

    fn diffusion_sq(&self, x: f64, beta: f64) -> f64 {
        beta * beta * x
    }

    fn drift_dalpha(&self, x: f64, _alpha: f64) -> f64 {
        self.mean - x
    }

    fn diffusion_sq_dbeta(&self, x: f64, beta: f64) -> f64 {
        2.0 * beta * x
    }

    fn jets(&self, x: f64, theta: ParamPoint, order: usize) -> CoefficientJets {
        let (a, b) = (theta.alpha, theta.beta);
        CoefficientJets {
            drift: Jet::new(&[a * (self.mean - x), -a]).pad(order),
            diffusion_sq: Jet::new(&[b * b * x, b * b]).pad(order),
            drift_dalpha: Jet::new(&[self.mean - x, -1.0]).pad(order),
            diffusion_sq_dbeta: Jet::new(&[2.0 * b * x, 2.0 * b]).pad(order),
        }
    }

    fn exact_moments(&self, delta: f64, x: f64, theta: ParamPoint) -> Option<ConditionalMoments> {
        let m = self.mean;
        let var_at = |a: f64, b: f64| {
            let e = (-a * delta).exp();
            let g = one_minus_exp_ratio(a * delta);
            b * b * delta * (x * e * g + 0.5 * m * a * delta * g * g)
        };
        let (a, b) = (theta.alpha, theta.beta);
        let e = (-a * delta).exp();
        let var = var_at(a, b);
        Some(ConditionalMoments {
            mean: m + (x - m) * e,
            var,
            dmean: [-delta * (x - m) * e, 0.0],
            dvar: [jet::parameter_derivative(|s| var_at(s, b), a), 2.0 * var / b],
        })
    }

    fn anchor(&self) -> f64 {
        self.mean
    }

    fn analytic_derivatives(&self) -> bool {
        true
    }

    fn log_unnormalized_density(&self, x: f64, theta: ParamPoint) -> Result<f64> {
        if x <= 0.0 {
            return Err(Error::OutsideInterval { x, lower: 0.0, upper: f64::INFINITY });
        }
        let v = theta.beta * theta.beta;
        Ok(2.0 * theta.alpha / v * (self.mean * x.ln() - x) - (v * x).ln())
    }

    fn lamperti_increments(&self, x: f64, y: f64, theta: ParamPoint) -> Result<LampertiIncrements> {
        let (a, b) = (theta.alpha, theta.beta);
        if x <= 0.0 || y <= 0.0 {
            return Err(Error::OutsideInterval { x: x.min(y), lower: 0.0, upper: f64::INFINITY });
        }
        let root = y.sqrt() - x.sqrt();
        let lm = self.mean * (y / x).ln() - (y - x);
        Ok(LampertiIncrements {
            dk: 2.0 * root / b,
            dk_beta: -2.0 * root / (b * b),
            dm_alpha: lm / (b * b),
            dm_beta: -2.0 * a * lm / (b * b * b),
        })
    }

    fn project(&self, x: f64) -> f64 {
        x.max(0.0)
    }

    fn validate(&self, theta: ParamPoint) -> Result<()> {
        if !theta.is_finite() || theta.alpha <= 0.0 || theta.beta == 0.0 {
            return Err(Error::InvalidParameter(format!(
                "cir needs alpha > 0 and beta != 0, got {theta:?}"
            )));
        }
        if 2.0 * theta.alpha * self.mean < theta.beta * theta.beta {
            log::warn!(
                "cir: 2 alpha m0 = {} < beta^2 = {}; the boundary 0 is attainable",
                2.0 * theta.alpha * self.mean,
                theta.beta * theta.beta
            );
        }
        Ok(())
    }
}

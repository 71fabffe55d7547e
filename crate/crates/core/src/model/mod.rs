//! Scalar diffusion models `dX = b(X; alpha) dt + sigma(X; beta) dW`.
//!
//! [`Diffusion`] is the model contract. Builtins ([`OrnsteinUhlenbeck`],
//! [`Cir`]) supply analytic coefficient derivatives, closed-form conditional
//! moments and stationary densities; [`CustomDiffusion`] wraps plain closures
//! and falls back to finite differences and quadrature for everything else.

mod builtin;
mod custom;
mod generator;
mod stationary;

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::{self, Jet};
use crate::quad;

pub use builtin::{Cir, OrnsteinUhlenbeck};
pub use custom::CustomDiffusion;
pub use generator::{apply_generator, FnField, Polynomial, ScalarField, MAX_GENERATOR_POWER};
pub use generator::{power_parameter_derivatives, powers};
pub(crate) use generator::jet_power_series;
pub use stationary::{stationary_density, stationary_expectation, StationaryLaw};

/// Parameter vector `theta = (alpha, beta)`: drift and diffusion parameter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamPoint {
    pub alpha: f64,
    pub beta: f64,
}

impl ParamPoint {
    pub fn new(alpha: f64, beta: f64) -> Self {
        ParamPoint { alpha, beta }
    }

    pub fn is_finite(&self) -> bool {
        self.alpha.is_finite() && self.beta.is_finite()
    }

    pub fn get(&self, i: usize) -> f64 {
        match i {
            0 => self.alpha,
            1 => self.beta,
            _ => panic!("parameter index {i} out of range"),
        }
    }

    /// Copy with coordinate `i` shifted by `h`.
    pub fn shifted(&self, i: usize, h: f64) -> Self {
        let mut p = *self;
        match i {
            0 => p.alpha += h,
            1 => p.beta += h,
            _ => panic!("parameter index {i} out of range"),
        }
        p
    }
}

/// Open state interval `(lower, upper)`; either end may be infinite.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateInterval {
    pub lower: f64,
    pub upper: f64,
}

impl StateInterval {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if lower.is_nan() || upper.is_nan() || lower >= upper {
            return Err(Error::InvalidModelConstant(format!(
                "state interval ({lower}, {upper}) is empty"
            )));
        }
        Ok(StateInterval { lower, upper })
    }

    pub fn real_line() -> Self {
        StateInterval { lower: f64::NEG_INFINITY, upper: f64::INFINITY }
    }

    pub fn positive() -> Self {
        StateInterval { lower: 0.0, upper: f64::INFINITY }
    }

    pub fn contains(&self, x: f64) -> bool {
        x > self.lower && x < self.upper
    }

    pub fn check(&self, x: f64) -> Result<()> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(Error::OutsideInterval { x, lower: self.lower, upper: self.upper })
        }
    }

    /// A convenient interior point.
    pub fn interior_point(&self) -> f64 {
        match (self.lower.is_finite(), self.upper.is_finite()) {
            (true, true) => 0.5 * (self.lower + self.upper),
            (true, false) => self.lower + 1.0,
            (false, true) => self.upper - 1.0,
            (false, false) => 0.0,
        }
    }
}

/// x-jets of `b`, `v = sigma^2`, `d_alpha b` and `d_beta v` at one point.
#[derive(Clone, Copy, Debug)]
pub struct CoefficientJets {
    pub drift: Jet,
    pub diffusion_sq: Jet,
    pub drift_dalpha: Jet,
    pub diffusion_sq_dbeta: Jet,
}

/// `F = E(X_delta | X_0 = x)`, `phi = Var(X_delta | X_0 = x)` and their
/// derivatives with respect to `(alpha, beta)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConditionalMoments {
    pub mean: f64,
    pub var: f64,
    pub dmean: [f64; 2],
    pub dvar: [f64; 2],
}

/// Increments between `x` and `y` of the Lamperti-type integrals
/// `k = int 1/sigma` and `m = int b/sigma^2`, with their parameter derivatives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LampertiIncrements {
    /// `k(y) - k(x)`
    pub dk: f64,
    /// `d_beta k(y) - d_beta k(x)`
    pub dk_beta: f64,
    /// `d_alpha m(y) - d_alpha m(x)`
    pub dm_alpha: f64,
    /// `d_beta m(y) - d_beta m(x)`
    pub dm_beta: f64,
}

pub trait Diffusion: Send + Sync + std::fmt::Debug {
    fn name(&self) -> &str;

    fn interval(&self) -> StateInterval;

    /// `b(x; alpha)`
    fn drift(&self, x: f64, alpha: f64) -> f64;

    /// `v(x; beta) = sigma(x; beta)^2`
    fn diffusion_sq(&self, x: f64, beta: f64) -> f64;

    fn diffusion(&self, x: f64, beta: f64) -> f64 {
        self.diffusion_sq(x, beta).sqrt()
    }

    fn drift_dalpha(&self, x: f64, alpha: f64) -> f64 {
        jet::parameter_derivative(|a| self.drift(x, a), alpha)
    }

    fn diffusion_sq_dbeta(&self, x: f64, beta: f64) -> f64 {
        jet::parameter_derivative(|b| self.diffusion_sq(x, b), beta)
    }

    /// x-derivatives of the coefficients up to `order` (at most 4 on the
    /// finite-difference path).
    fn jets(&self, x: f64, theta: ParamPoint, order: usize) -> CoefficientJets {
        let iv = self.interval();
        let fd = |f: &dyn Fn(f64) -> f64| jet::finite_difference_jet(f, x, order, iv.lower, iv.upper);
        CoefficientJets {
            drift: fd(&|z| self.drift(z, theta.alpha)),
            diffusion_sq: fd(&|z| self.diffusion_sq(z, theta.beta)),
            drift_dalpha: fd(&|z| self.drift_dalpha(z, theta.alpha)),
            diffusion_sq_dbeta: fd(&|z| self.diffusion_sq_dbeta(z, theta.beta)),
        }
    }

    /// Closed-form conditional moments, when the model has them.
    fn exact_moments(&self, _delta: f64, _x: f64, _theta: ParamPoint) -> Option<ConditionalMoments> {
        None
    }

    /// Whether the transition law is Gaussian with the moments of
    /// [`Diffusion::exact_moments`] (enables exact conditional expectations).
    fn gaussian_transition(&self) -> bool {
        false
    }

    /// Reference point `x#` for the scale density.
    fn anchor(&self) -> f64 {
        self.interval().interior_point()
    }

    /// `log([s(x) v(x)]^-1)` up to an additive constant, where
    /// `s(x) = exp(-2 int_{x#}^x b/v)` is the scale density.
    fn log_unnormalized_density(&self, x: f64, theta: ParamPoint) -> Result<f64> {
        let a = self.anchor();
        let integrand = |z: f64| self.drift(z, theta.alpha) / self.diffusion_sq(z, theta.beta);
        let (lo, hi, sign) = if x >= a { (a, x, 1.0) } else { (x, a, -1.0) };
        let int = quad::integrate(|z| [integrand(z)], lo, hi, 8, 1e-12, 1e-14)?[0] * sign;
        Ok(2.0 * int - self.diffusion_sq(x, theta.beta).ln())
    }

    /// Direct draw from the stationary law, when available in closed form.
    fn sample_stationary(&self, _theta: ParamPoint, _rng: &mut dyn RngCore) -> Option<f64> {
        None
    }

    fn lamperti_increments(&self, x: f64, y: f64, theta: ParamPoint) -> Result<LampertiIncrements> {
        let (a, b) = (theta.alpha, theta.beta);
        let f = |z: f64| {
            let v = self.diffusion_sq(z, b);
            let dv = self.diffusion_sq_dbeta(z, b);
            [
                1.0 / v.sqrt(),
                -dv / (2.0 * v.powf(1.5)),
                self.drift_dalpha(z, a) / v,
                -self.drift(z, a) * dv / (v * v),
            ]
        };
        let (lo, hi, sign) = if y >= x { (x, y, 1.0) } else { (y, x, -1.0) };
        let r = quad::integrate_doubling(f, lo, hi, 1e-10)?;
        Ok(LampertiIncrements {
            dk: sign * r[0],
            dk_beta: sign * r[1],
            dm_alpha: sign * r[2],
            dm_beta: sign * r[3],
        })
    }

    /// Boundary handling applied to the state before evaluating coefficients
    /// during simulation (identity unless the model needs truncation).
    fn project(&self, x: f64) -> f64 {
        x
    }

    /// Whether the coefficient partials and x-derivatives are exact rather
    /// than finite differences.
    fn analytic_derivatives(&self) -> bool {
        false
    }

    /// Parameter sanity checks; may log configuration warnings.
    fn validate(&self, theta: ParamPoint) -> Result<()> {
        if !theta.is_finite() {
            return Err(Error::InvalidParameter(format!("non-finite parameter {theta:?}")));
        }
        Ok(())
    }
}

/// Model block of the experiment configuration: `{"name": "ou"|"cir", "fixed": {...}}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub name: String,
    #[serde(default)]
    pub fixed: BTreeMap<String, f64>,
}

impl ModelConfig {
    pub fn build(&self) -> Result<Arc<dyn Diffusion>> {
        builtin_model(&self.name, &self.fixed)
    }
}

/// Instantiates a named builtin model.
///
/// `"ou"`: `b = -alpha x`, `sigma = beta` on the real line.
/// `"cir"`: `b = alpha (m0 - x)`, `sigma = beta sqrt(x)` on `(0, inf)`; needs
/// `fixed["m0"] > 0` (alias `"mean"`).
pub fn builtin_model(name: &str, fixed: &BTreeMap<String, f64>) -> Result<Arc<dyn Diffusion>> {
    match name.to_ascii_lowercase().as_str() {
        "ou" => {
            if let Some(k) = fixed.keys().next() {
                return Err(Error::InvalidModelConstant(format!("ou takes no constant `{k}`")));
            }
            Ok(Arc::new(OrnsteinUhlenbeck))
        }
        "cir" => {
            let mut m0 = None;
            for (k, v) in fixed {
                match k.as_str() {
                    "m0" | "mean" => m0 = Some(*v),
                    other => {
                        return Err(Error::InvalidModelConstant(format!(
                            "cir takes no constant `{other}`"
                        )))
                    }
                }
            }
            let m0 = m0.ok_or_else(|| {
                Error::InvalidModelConstant("cir requires the long-run mean `m0`".into())
            })?;
            Ok(Arc::new(Cir::new(m0)?))
        }
        _ => Err(Error::UnknownModel(name.to_string())),
    }
}

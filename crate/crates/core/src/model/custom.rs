use std::fmt;
use std::sync::Arc;

use super::{Diffusion, StateInterval};

type Coefficient = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// A user model given by `b(x; alpha)` and `sigma(x; beta)` closures.
///
/// Parameter partials and x-derivatives come from central differences,
/// the stationary density and the Lamperti integrals from quadrature.
#[derive(Clone)]
pub struct CustomDiffusion {
    name: String,
    interval: StateInterval,
    drift: Coefficient,
    sigma: Coefficient,
    anchor: Option<f64>,
}

impl CustomDiffusion {
    pub fn new(
        name: impl Into<String>,
        interval: StateInterval,
        drift: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        sigma: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        CustomDiffusion {
            name: name.into(),
            interval,
            drift: Arc::new(drift),
            sigma: Arc::new(sigma),
            anchor: None,
        }
    }

    /// Reference point for the scale density and Lamperti integrals.
    pub fn with_anchor(mut self, anchor: f64) -> Self {
        self.anchor = Some(anchor);
        self
    }
}

impl fmt::Debug for CustomDiffusion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomDiffusion")
            .field("name", &self.name)
            .field("interval", &self.interval)
            .field("anchor", &self.anchor)
            .finish_non_exhaustive()
    }
}

impl Diffusion for CustomDiffusion {
    fn name(&self) -> &str {
        &self.name
    }

    fn interval(&self) -> StateInterval {
        self.interval
    }

    fn drift(&self, x: f64, alpha: f64) -> f64 {
        (self.drift)(x, alpha)
    }

    fn diffusion(&self, x: f64, beta: f64) -> f64 {
        (self.sigma)(x, beta)
    }

    fn diffusion_sq(&self, x: f64, beta: f64) -> f64 {
        let s = (self.sigma)(x, beta);
        s * s
    }

    fn anchor(&self) -> f64 {
        self.anchor.unwrap_or_else(|| self.interval.interior_point())
    }
}

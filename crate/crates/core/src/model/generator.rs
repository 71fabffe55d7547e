use std::fmt;
use std::sync::Arc;

use super::{Diffusion, ParamPoint, StateInterval};
use crate::error::{Error, Result};
use crate::jet::{self, Jet, MAX_ORDER};

/// Highest generator power the crate evaluates.
pub const MAX_GENERATOR_POWER: usize = 3;

/// A function of the state with derivatives available up to [`ScalarField::max_order`].
pub trait ScalarField: Send + Sync {
    fn max_order(&self) -> usize;

    /// Derivatives `f, f', ..., f^(order)` at `x`.
    fn jet(&self, x: f64, order: usize) -> Result<Jet>;

    fn value(&self, x: f64) -> f64 {
        self.jet(x, 0).map(|j| j.value()).unwrap_or(f64::NAN)
    }
}

/// `sum_i c_i x^i`, with exact derivatives of every order.
#[derive(Clone, Debug, PartialEq)]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl Polynomial {
    /// Coefficients in increasing degree.
    pub fn new(coeffs: Vec<f64>) -> Self {
        assert!(!coeffs.is_empty(), "polynomial needs at least one coefficient");
        Polynomial { coeffs }
    }

    pub fn monomial(degree: usize) -> Self {
        let mut coeffs = vec![0.0; degree + 1];
        coeffs[degree] = 1.0;
        Polynomial { coeffs }
    }

    /// `(x - center)^degree`
    pub fn centered_power(center: f64, degree: usize) -> Self {
        let mut coeffs = vec![1.0];
        for _ in 0..degree {
            let mut next = vec![0.0; coeffs.len() + 1];
            for (i, c) in coeffs.iter().enumerate() {
                next[i + 1] += c;
                next[i] -= center * c;
            }
            coeffs = next;
        }
        Polynomial { coeffs }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }
}

impl ScalarField for Polynomial {
    fn max_order(&self) -> usize {
        MAX_ORDER
    }

    fn jet(&self, x: f64, order: usize) -> Result<Jet> {
        let order = order.min(MAX_ORDER);
        let mut d = vec![0.0; order + 1];
        let mut current = self.coeffs.clone();
        for slot in d.iter_mut() {
            *slot = current.iter().rev().fold(0.0, |acc, c| acc * x + c);
            current = current
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, c)| i as f64 * c)
                .collect();
            if current.is_empty() {
                break;
            }
        }
        Ok(Jet::new(&d))
    }

    fn value(&self, x: f64) -> f64 {
        self.eval(x)
    }
}

/// Closure-backed field; derivatives up to order 4 by central differences.
#[derive(Clone)]
pub struct FnField {
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    interval: StateInterval,
}

impl FnField {
    pub fn new(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        FnField { f: Arc::new(f), interval: StateInterval::real_line() }
    }

    /// Keeps difference stencils inside `interval`.
    pub fn on(mut self, interval: StateInterval) -> Self {
        self.interval = interval;
        self
    }
}

impl fmt::Debug for FnField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnField").field("interval", &self.interval).finish_non_exhaustive()
    }
}

impl ScalarField for FnField {
    fn max_order(&self) -> usize {
        4
    }

    fn jet(&self, x: f64, order: usize) -> Result<Jet> {
        if order > 4 {
            return Err(Error::InsufficientDerivativeOrder { required: order, available: 4 });
        }
        let j = jet::finite_difference_jet(&*self.f, x, order, self.interval.lower, self.interval.upper);
        if j.derivs().iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalDifferentiation(x));
        }
        Ok(j)
    }

    fn value(&self, x: f64) -> f64 {
        (self.f)(x)
    }
}

fn check_request(model: &dyn Diffusion, f: &dyn ScalarField, power: usize, x: f64) -> Result<()> {
    model.interval().check(x)?;
    if power > MAX_GENERATOR_POWER {
        return Err(Error::GeneratorOrder(power));
    }
    if f.max_order() < 2 * power {
        return Err(Error::InsufficientDerivativeOrder {
            required: 2 * power,
            available: f.max_order(),
        });
    }
    Ok(())
}

/// `L^order f(x)` with `L = b d/dx + v/2 d^2/dx^2` at parameter `theta`.
pub fn apply_generator(
    model: &dyn Diffusion,
    theta: ParamPoint,
    f: &dyn ScalarField,
    order: usize,
    x: f64,
) -> Result<f64> {
    Ok(powers(model, theta, f, order, x)?[order])
}

/// `[f(x), L f(x), ..., L^k_max f(x)]`.
pub fn powers(
    model: &dyn Diffusion,
    theta: ParamPoint,
    f: &dyn ScalarField,
    k_max: usize,
    x: f64,
) -> Result<Vec<f64>> {
    check_request(model, f, k_max, x)?;
    let mut current = f.jet(x, 2 * k_max)?;
    let mut out = vec![current.value()];
    if k_max == 0 {
        return Ok(out);
    }
    let c = model.jets(x, theta, 2 * (k_max - 1));
    for _ in 0..k_max {
        current = jet::generator(&c.drift, &c.diffusion_sq, &current);
        out.push(current.value());
    }
    finite(out, x)
}

/// Values of `L^k f(x)` together with their `(alpha, beta)` derivatives, for
/// a field `f` that does not depend on the parameters.
pub fn power_parameter_derivatives(
    model: &dyn Diffusion,
    theta: ParamPoint,
    f: &dyn ScalarField,
    k_max: usize,
    x: f64,
) -> Result<(Vec<f64>, Vec<[f64; 2]>)> {
    check_request(model, f, k_max, x)?;
    jet_power_series(model, theta, f.jet(x, 2 * k_max)?, k_max, x)
}

/// Same as [`power_parameter_derivatives`] for a field given by its jet at `x`
/// (which must carry at least `2 k_max` derivatives).
pub(crate) fn jet_power_series(
    model: &dyn Diffusion,
    theta: ParamPoint,
    f: Jet,
    k_max: usize,
    x: f64,
) -> Result<(Vec<f64>, Vec<[f64; 2]>)> {
    if k_max > MAX_GENERATOR_POWER {
        return Err(Error::GeneratorOrder(k_max));
    }
    if f.order() < 2 * k_max {
        return Err(Error::InsufficientDerivativeOrder { required: 2 * k_max, available: f.order() });
    }
    let mut current = f;
    let mut d_alpha = Jet::zero(current.order());
    let mut d_beta = Jet::zero(current.order());
    let mut values = vec![current.value()];
    let mut partials = vec![[0.0, 0.0]];
    if k_max > 0 {
        let c = model.jets(x, theta, 2 * (k_max - 1));
        let half_dv = c.diffusion_sq_dbeta.scale(0.5);
        for _ in 0..k_max {
            let f1 = current.derivative();
            let f2 = f1.derivative();
            d_alpha = c.drift_dalpha * f1 + jet::generator(&c.drift, &c.diffusion_sq, &d_alpha);
            d_beta = half_dv * f2 + jet::generator(&c.drift, &c.diffusion_sq, &d_beta);
            current = jet::generator(&c.drift, &c.diffusion_sq, &current);
            values.push(current.value());
            partials.push([d_alpha.value(), d_beta.value()]);
        }
    }
    let values = finite(values, x)?;
    if partials.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NumericalDifferentiation(x));
    }
    Ok((values, partials))
}

fn finite(v: Vec<f64>, x: f64) -> Result<Vec<f64>> {
    if v.iter().all(|z| z.is_finite()) {
        Ok(v)
    } else {
        Err(Error::NumericalDifferentiation(x))
    }
}

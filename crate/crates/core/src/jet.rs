//! Truncated Taylor jets.
//!
//! A [`Jet`] stores `f(x), f'(x), ..., f^(k)(x)` at a single point. Products
//! follow the Leibniz rule, so generator powers can be applied exactly to
//! any function whose derivatives are known at `x`.

use std::ops::{Add, Mul, Neg, Sub};

/// Highest derivative a jet can carry.
pub const MAX_ORDER: usize = 8;

const BINOM: [[f64; MAX_ORDER + 1]; MAX_ORDER + 1] = binomials();

const fn binomials() -> [[f64; MAX_ORDER + 1]; MAX_ORDER + 1] {
    let mut t = [[0.0; MAX_ORDER + 1]; MAX_ORDER + 1];
    let mut n = 0;
    while n <= MAX_ORDER {
        t[n][0] = 1.0;
        let mut k = 1;
        while k <= n {
            t[n][k] = t[n - 1][k - 1] + if k < n { t[n - 1][k] } else { 0.0 };
            k += 1;
        }
        n += 1;
    }
    t
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet {
    d: [f64; MAX_ORDER + 1],
    order: usize,
}

impl Jet {
    /// Builds a jet from `[f, f', f'', ...]`; entries beyond [`MAX_ORDER`] are dropped.
    pub fn new(derivs: &[f64]) -> Self {
        assert!(!derivs.is_empty(), "a jet needs at least a value");
        let order = (derivs.len() - 1).min(MAX_ORDER);
        let mut d = [0.0; MAX_ORDER + 1];
        d[..=order].copy_from_slice(&derivs[..=order]);
        Jet { d, order }
    }

    pub fn constant(c: f64, order: usize) -> Self {
        let mut d = [0.0; MAX_ORDER + 1];
        d[0] = c;
        Jet { d, order: order.min(MAX_ORDER) }
    }

    pub fn zero(order: usize) -> Self {
        Self::constant(0.0, order)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn value(&self) -> f64 {
        self.d[0]
    }

    /// k-th derivative; zero above the stored order.
    pub fn deriv(&self, k: usize) -> f64 {
        if k <= self.order {
            self.d[k]
        } else {
            0.0
        }
    }

    pub fn derivs(&self) -> &[f64] {
        &self.d[..=self.order]
    }

    /// Derivative jet, one order lower. A zero-order jet maps to zero.
    pub fn derivative(&self) -> Jet {
        if self.order == 0 {
            return Jet::zero(0);
        }
        let mut d = [0.0; MAX_ORDER + 1];
        d[..self.order].copy_from_slice(&self.d[1..=self.order]);
        Jet { d, order: self.order - 1 }
    }

    pub fn truncate(mut self, order: usize) -> Jet {
        if order < self.order {
            for v in &mut self.d[order + 1..] {
                *v = 0.0;
            }
            self.order = order;
        }
        self
    }

    /// Raises the stored order to `order`, treating missing derivatives as zero.
    /// Use only for functions that are polynomial of degree at most the current order.
    pub fn pad(mut self, order: usize) -> Jet {
        self.order = order.clamp(self.order, MAX_ORDER);
        self
    }

    pub fn scale(mut self, s: f64) -> Jet {
        for v in &mut self.d[..=self.order] {
            *v *= s;
        }
        self
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, rhs: Jet) -> Jet {
        let order = self.order.min(rhs.order);
        let mut d = [0.0; MAX_ORDER + 1];
        for k in 0..=order {
            d[k] = self.d[k] + rhs.d[k];
        }
        Jet { d, order }
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, rhs: Jet) -> Jet {
        self + (-rhs)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, rhs: Jet) -> Jet {
        let order = self.order.min(rhs.order);
        let mut d = [0.0; MAX_ORDER + 1];
        for n in 0..=order {
            let mut s = 0.0;
            for k in 0..=n {
                s += BINOM[n][k] * self.d[k] * rhs.d[n - k];
            }
            d[n] = s;
        }
        Jet { d, order }
    }
}

/// `b f' + v f'' / 2` on jets. The result loses two orders relative to `f`.
pub fn generator(drift: &Jet, diffusion_sq: &Jet, f: &Jet) -> Jet {
    debug_assert!(f.order() >= 2);
    let f1 = f.derivative();
    let f2 = f1.derivative();
    *drift * f1 + diffusion_sq.scale(0.5) * f2
}

/// Central finite-difference jet of a scalar function, derivatives up to order 4.
///
/// Fourth-order accurate stencils; the step grows with the derivative order
/// and is clipped so that every stencil point stays inside `(lower, upper)`.
pub fn finite_difference_jet(
    f: impl Fn(f64) -> f64,
    x: f64,
    order: usize,
    lower: f64,
    upper: f64,
) -> Jet {
    const BASE_STEP: [f64; 5] = [0.0, 1e-3, 2e-3, 5e-3, 1e-2];
    let order = order.min(4);
    let room = ((x - lower).min(upper - x) / 3.5).max(f64::MIN_POSITIVE);
    let mut d = vec![f(x)];
    for k in 1..=order {
        let h = (BASE_STEP[k] * x.abs().max(1.0)).min(room);
        let at = |i: f64| f(x + i * h);
        let v = match k {
            1 => (at(-2.0) - 8.0 * at(-1.0) + 8.0 * at(1.0) - at(2.0)) / (12.0 * h),
            2 => {
                (-at(-2.0) + 16.0 * at(-1.0) - 30.0 * d[0] + 16.0 * at(1.0) - at(2.0))
                    / (12.0 * h * h)
            }
            3 => {
                (at(-3.0) - 8.0 * at(-2.0) + 13.0 * at(-1.0) - 13.0 * at(1.0) + 8.0 * at(2.0)
                    - at(3.0))
                    / (8.0 * h.powi(3))
            }
            _ => {
                (-at(-3.0) + 12.0 * at(-2.0) - 39.0 * at(-1.0) + 56.0 * d[0] - 39.0 * at(1.0)
                    + 12.0 * at(2.0)
                    - at(3.0))
                    / (6.0 * h.powi(4))
            }
        };
        d.push(v);
    }
    Jet::new(&d)
}

/// Central difference in a parameter, step `1e-6 * max(1, |p|)`.
pub fn parameter_derivative(f: impl Fn(f64) -> f64, p: f64) -> f64 {
    let h = 1e-6 * p.abs().max(1.0);
    (f(p + h) - f(p - h)) / (2.0 * h)
}

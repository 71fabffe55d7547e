use std::fmt;
use std::sync::Arc;

use crate::error::Result;
use crate::jet::Jet;
use crate::model::{Polynomial, ScalarField};

/// Basis `f = (f_1, ..., f_N)` of state functions for `A(x) [f(y) - pi f(x)]`.
#[derive(Clone)]
pub struct Basis {
    fields: Vec<Arc<dyn ScalarField>>,
}

impl Basis {
    pub fn new(fields: Vec<Arc<dyn ScalarField>>) -> Self {
        assert!(!fields.is_empty(), "a basis needs at least one function");
        Basis { fields }
    }

    pub fn polynomials(polys: Vec<Polynomial>) -> Self {
        Basis::new(polys.into_iter().map(|p| Arc::new(p) as Arc<dyn ScalarField>).collect())
    }

    /// `(x^d_1, ..., x^d_N)`
    pub fn monomials(degrees: &[usize]) -> Self {
        Basis::polynomials(degrees.iter().map(|&d| Polynomial::monomial(d)).collect())
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    /// Smallest derivative order supported by every basis function.
    pub fn max_order(&self) -> usize {
        self.fields.iter().map(|f| f.max_order()).min().unwrap_or(0)
    }

    pub fn jet(&self, j: usize, x: f64, order: usize) -> Result<Jet> {
        self.fields[j].jet(x, order)
    }

    pub fn values(&self, x: f64) -> Vec<f64> {
        self.fields.iter().map(|f| f.value(x)).collect()
    }
}

impl fmt::Debug for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Basis").field("len", &self.fields.len()).finish()
    }
}

use std::fmt;
use std::sync::Arc;

use nalgebra::Vector2;

use super::{Basis, EstimatingFunction, MartingaleOrder, WeightMatrix};
use crate::error::{Error, Result};
use crate::model::{Diffusion, ParamPoint};
use crate::moments::{basis_moments, MomentEngine};

/// `g = A(x, delta; theta) [f(y) - pi f(x)]` for a basis `f` and weights `A`.
#[derive(Clone)]
pub struct BasisEf {
    model: Arc<dyn Diffusion>,
    basis: Basis,
    weights: Arc<dyn WeightMatrix>,
    engine: MomentEngine,
    name: String,
}

impl fmt::Debug for BasisEf {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BasisEf")
            .field("name", &self.name)
            .field("model", &self.model.name())
            .field("basis", &self.basis)
            .field("engine", &self.engine)
            .finish()
    }
}

pub fn basis_ef(
    model: Arc<dyn Diffusion>,
    basis: Basis,
    weights: Arc<dyn WeightMatrix>,
    engine: MomentEngine,
) -> Result<BasisEf> {
    if weights.cols() != basis.len() {
        return Err(Error::InvalidConfig(format!(
            "weights have {} columns for a basis of {} functions",
            weights.cols(),
            basis.len()
        )));
    }
    Ok(BasisEf { model, basis, weights, engine, name: format!("basis-{engine}") })
}

impl BasisEf {
    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn weights(&self) -> &Arc<dyn WeightMatrix> {
        &self.weights
    }
}

impl EstimatingFunction for BasisEf {
    fn name(&self) -> &str {
        &self.name
    }

    fn model(&self) -> &dyn Diffusion {
        &*self.model
    }

    fn eval(&self, delta: f64, y: f64, x: f64, theta: ParamPoint) -> Result<Vector2<f64>> {
        self.model.interval().check(x)?;
        let a = self.weights.weights(x, delta, theta)?;
        let pi = if delta == 0.0 {
            self.basis.values(x)
        } else {
            basis_moments(&*self.model, &self.basis, self.engine, delta, x, theta)?.mean
        };
        let fy = self.basis.values(y);
        let mut g = Vector2::zeros();
        for j in 0..self.basis.len() {
            let r = fy[j] - pi[j];
            g[0] += a[(0, j)] * r;
            g[1] += a[(1, j)] * r;
        }
        Ok(g)
    }

    fn order(&self) -> MartingaleOrder {
        self.engine.into()
    }

    fn version_note(&self) -> &str {
        "weights normalized as diag(1, delta) times the Godambe-Heyde solution"
    }
}

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};
use parking_lot::RwLock;

use super::Basis;
use crate::error::{Error, Result};
use crate::model::{Diffusion, ParamPoint, MAX_GENERATOR_POWER};
use crate::moments::{basis_moment_series, basis_moments, MomentEngine};

/// `A(x, delta; theta)`: a 2 x N weight matrix for a basis of N functions.
pub trait WeightMatrix: Send + Sync {
    fn cols(&self) -> usize;

    fn weights(&self, x: f64, delta: f64, theta: ParamPoint) -> Result<DMatrix<f64>>;
}

/// Second-row coupling `c(x; theta)` of the efficient weights.
pub type Coupling = Arc<dyn Fn(f64, ParamPoint) -> f64 + Send + Sync>;

/// Delta-constant weights `A(x) = [[d_alpha b / v, c], [0, d_beta v / v^2]] M(x)^-1`
/// with `M = [[f_1', f_1''], [f_2', f_2'']]`.
///
/// An estimating function `A(x) [f(y) - pi f(x)]` built from these weights
/// satisfies the rate-optimality and efficiency conditions by construction.
#[derive(Clone)]
pub struct EfficientWeights {
    model: Arc<dyn Diffusion>,
    basis: Basis,
    coupling: Option<Coupling>,
}

impl fmt::Debug for EfficientWeights {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EfficientWeights")
            .field("model", &self.model.name())
            .field("basis", &self.basis)
            .field("coupling", &self.coupling.is_some())
            .finish()
    }
}

/// Builds [`EfficientWeights`]; `coupling = None` means `c = 0`.
pub fn efficient_weights(
    model: Arc<dyn Diffusion>,
    basis: Basis,
    coupling: Option<Coupling>,
) -> Result<EfficientWeights> {
    if basis.len() != 2 {
        return Err(Error::InvalidConfig(format!(
            "efficient weights need a basis of two functions, got {}",
            basis.len()
        )));
    }
    if basis.max_order() < 2 {
        return Err(Error::InsufficientDerivativeOrder { required: 2, available: basis.max_order() });
    }
    Ok(EfficientWeights { model, basis, coupling })
}

impl EfficientWeights {
    /// `M(x)` from the basis derivatives.
    pub fn basis_matrix(&self, x: f64) -> Result<DMatrix<f64>> {
        let j0 = self.basis.jet(0, x, 2)?;
        let j1 = self.basis.jet(1, x, 2)?;
        Ok(DMatrix::from_row_slice(2, 2, &[j0.deriv(1), j0.deriv(2), j1.deriv(1), j1.deriv(2)]))
    }
}

impl WeightMatrix for EfficientWeights {
    fn cols(&self) -> usize {
        2
    }

    fn weights(&self, x: f64, _delta: f64, theta: ParamPoint) -> Result<DMatrix<f64>> {
        self.model.interval().check(x)?;
        let m = self.basis_matrix(x)?;
        let scale = m.iter().fold(0.0f64, |s, v| s.max(v.abs()));
        let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
        if !(det.abs() > 1e-12 * scale * scale) {
            return Err(Error::SingularBasis(x));
        }
        let inv = DMatrix::from_row_slice(2, 2, &[m[(1, 1)], -m[(0, 1)], -m[(1, 0)], m[(0, 0)]]) / det;
        let v = self.model.diffusion_sq(x, theta.beta);
        let c = self.coupling.as_ref().map_or(0.0, |c| c(x, theta));
        let target = DMatrix::from_row_slice(
            2,
            2,
            &[
                self.model.drift_dalpha(x, theta.alpha) / v,
                c,
                0.0,
                self.model.diffusion_sq_dbeta(x, theta.beta) / (v * v),
            ],
        );
        Ok(target * inv)
    }
}

type CacheKey = (i64, u64, u64, u64);
const CACHE_LIMIT: usize = 200_000;

/// Godambe-Heyde optimal weights `B = diag(1, delta) A*` where `A* C = R`,
/// `C` is the conditional covariance of `f(X_delta)` and `R = d_theta pi f`.
/// At `delta = 0` the continuous limit `B(x, 0)` is returned.
pub struct GodambeHeydeWeights {
    model: Arc<dyn Diffusion>,
    basis: Basis,
    engine: MomentEngine,
    cache: RwLock<HashMap<CacheKey, DMatrix<f64>>>,
}

impl fmt::Debug for GodambeHeydeWeights {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GodambeHeydeWeights")
            .field("model", &self.model.name())
            .field("basis", &self.basis)
            .field("engine", &self.engine)
            .finish()
    }
}

/// Builds the Godambe-Heyde weight matrix for `basis` under `engine`.
pub fn gh_optimal_general(
    model: Arc<dyn Diffusion>,
    basis: Basis,
    engine: MomentEngine,
) -> Result<GodambeHeydeWeights> {
    if basis.len() < 2 {
        return Err(Error::InvalidConfig("Godambe-Heyde weights need at least two basis functions".into()));
    }
    if engine == MomentEngine::Exact && !model.gaussian_transition() {
        return Err(Error::UnsupportedMomentEngine(format!(
            "exact basis moments are not available for model `{}`",
            model.name()
        )));
    }
    Ok(GodambeHeydeWeights { model, basis, engine, cache: RwLock::new(HashMap::new()) })
}

impl GodambeHeydeWeights {
    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    pub fn engine(&self) -> MomentEngine {
        self.engine
    }

    fn key(x: f64, delta: f64, theta: ParamPoint) -> CacheKey {
        ((x * 1e12).round() as i64, delta.to_bits(), theta.alpha.to_bits(), theta.beta.to_bits())
    }

    fn compute(&self, x: f64, delta: f64, theta: ParamPoint) -> Result<DMatrix<f64>> {
        if delta == 0.0 {
            return self.limit(x, theta);
        }
        let m = basis_moments(&*self.model, &self.basis, self.engine, delta, x, theta)?;
        let n = self.basis.len();
        let eig = SymmetricEigen::new(m.cov.clone());
        let max = eig.eigenvalues.iter().fold(0.0f64, |s, v| s.max(v.abs()));
        let min = eig.eigenvalues.iter().fold(f64::INFINITY, |s, v| s.min(*v));
        if !(max > 0.0 && min > 1e-12 * max) {
            return Err(Error::SingularCovariance(x));
        }
        let mut inv = DMatrix::zeros(n, n);
        for (k, lambda) in eig.eigenvalues.iter().enumerate() {
            let u = eig.eigenvectors.column(k);
            inv += u * u.transpose() / *lambda;
        }
        let mut b = &m.sensitivity * inv;
        b.row_mut(1).scale_mut(delta);
        Ok(b)
    }

    /// `B(x, 0)` from the Taylor coefficients of `C` and `R` in `delta`.
    ///
    /// Writing `B = sum_m B^m delta^m`, the equations `B_1 C = R_1` and
    /// `B_2 C = delta R_2` give, order by order in `delta`, a block-triangular
    /// Toeplitz system in `(B^0, B^1, B^2)`. It is rank deficient (the leading
    /// covariance coefficient has rank one) but determines `B^0`, which is
    /// extracted from the minimum-norm least-squares solution.
    fn limit(&self, x: f64, theta: ParamPoint) -> Result<DMatrix<f64>> {
        let k = MAX_GENERATOR_POWER;
        let n = self.basis.len();
        let s = basis_moment_series(&*self.model, &self.basis, x, theta, k)?;
        let dim = k * n;
        // t[(m, q)] block = c_{q + 1 - m} for q >= m
        let mut t = DMatrix::zeros(dim, dim);
        for m in 0..k {
            for q in m..k {
                t.view_mut((m * n, q * n), (n, n)).copy_from(&s.cov[q + 1 - m]);
            }
        }
        let tt = t.transpose();
        let svd = SVD::new(tt.clone(), true, true);
        let smax = svd.singular_values.max();
        if !(smax > 0.0) {
            return Err(Error::SingularCovariance(x));
        }
        let eps = 1e-10 * smax;
        let v_t = svd.v_t.as_ref().expect("SVD computed with V");
        for (i, sv) in svd.singular_values.iter().enumerate() {
            if *sv <= eps {
                let leading = v_t.row(i).columns(0, n).norm();
                if leading > 1e-6 {
                    return Err(Error::SingularCovariance(x));
                }
            }
        }
        let mut b = DMatrix::zeros(2, n);
        for row in 0..2 {
            let mut rhs = DVector::zeros(dim);
            for q in 0..k {
                let r = if row == 0 { Some(q + 1) } else { (q > 0).then_some(q) };
                if let Some(r) = r {
                    for j in 0..n {
                        rhs[q * n + j] = s.sensitivity[r][(row, j)];
                    }
                }
            }
            let sol = svd.solve(&rhs, eps).map_err(|e| Error::SingularMatrix(e.to_string()))?;
            let resid = (&tt * &sol - &rhs).norm();
            if resid > 1e-8 * (1.0 + rhs.norm()) {
                return Err(Error::SingularCovariance(x));
            }
            for j in 0..n {
                b[(row, j)] = sol[j];
            }
        }
        Ok(b)
    }
}

impl WeightMatrix for GodambeHeydeWeights {
    fn cols(&self) -> usize {
        self.basis.len()
    }

    fn weights(&self, x: f64, delta: f64, theta: ParamPoint) -> Result<DMatrix<f64>> {
        let key = Self::key(x, delta, theta);
        if let Some(b) = self.cache.read().get(&key) {
            return Ok(b.clone());
        }
        let b = self.compute(x, delta, theta)?;
        let mut cache = self.cache.write();
        if cache.len() >= CACHE_LIMIT {
            cache.clear();
        }
        cache.insert(key, b.clone());
        Ok(b)
    }
}

//! Limit quantities of the high-frequency asymptotics (sensitivity `S`,
//! variability `V`, `W_1`, `W_2`, the efficient bound and the
//! identifiability function `gamma`) and their empirical counterparts.

use std::cell::RefCell;
use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::conditions::diagonal_derivatives;
use crate::error::{Error, Result};
use crate::estfun::EstimatingFunction;
use crate::model::{Diffusion, ParamPoint, StationaryLaw};
use crate::simulate::SamplePath;
use crate::solve::normalization;

/// Relative tolerance of all stationary integrals in this module.
pub const QUAD_REL_TOL: f64 = 1e-8;

/// Row-major 2x2 matrix as it appears in reports.
pub type Mat2 = [[f64; 2]; 2];

fn to_mat2(m: &Matrix2<f64>) -> Mat2 {
    [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]]
}

pub fn from_mat2(m: &Mat2) -> Matrix2<f64> {
    Matrix2::new(m[0][0], m[0][1], m[1][0], m[1][1])
}

#[allow(non_snake_case)]
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticsReport {
    pub estimator: String,
    pub model: String,
    pub theta: ParamPoint,
    pub theta0: ParamPoint,
    pub S: Mat2,
    pub V: Mat2,
    pub W1: f64,
    pub W2: f64,
    /// `S^-1 V S^-T`: covariance of `sqrt(n delta) (theta_hat - theta0)`.
    pub cov_general: Mat2,
    /// `diag(W1 / S11^2, W2 / S22^2)`: covariance of
    /// `(sqrt(n delta) (alpha_hat - alpha0), sqrt(n) (beta_hat - beta0))`.
    pub cov_rate_optimal: Mat2,
    pub sigma_bound: Mat2,
}

/// Evaluates integrands that may fail; the first error wins.
struct Fallible {
    err: RefCell<Option<Error>>,
}

impl Fallible {
    fn new() -> Self {
        Fallible { err: RefCell::new(None) }
    }

    fn run<const N: usize>(&self, f: impl FnOnce() -> Result<[f64; N]>) -> [f64; N] {
        if self.err.borrow().is_some() {
            return [0.0; N];
        }
        match f() {
            Ok(v) => v,
            Err(e) => {
                *self.err.borrow_mut() = Some(e);
                [0.0; N]
            }
        }
    }

    fn finish<T>(self, value: Result<T>) -> Result<T> {
        match self.err.into_inner() {
            Some(e) => Err(e),
            None => value,
        }
    }
}

/// `S`, `V`, `W_1`, `W_2`, both limit covariances and the efficient bound
/// for `ef` evaluated at `theta` under the stationary law at `theta0`.
pub fn theoretical_asymptotics(
    ef: &dyn EstimatingFunction,
    model: &dyn Diffusion,
    theta: ParamPoint,
    theta0: ParamPoint,
) -> Result<AsymptoticsReport> {
    let law = StationaryLaw::new(model, theta0)?;
    let guard = Fallible::new();
    let integrals = law.expectation_fixed(
        |x| {
            guard.run(|| {
                let [d1g1, d1g2, d2g1, d2g2] = diagonal_derivatives(ef, model, theta, x)?;
                let ab = model.drift_dalpha(x, theta.alpha);
                let bv = model.diffusion_sq_dbeta(x, theta.beta);
                let v0 = model.diffusion_sq(x, theta0.beta);
                let v = model.diffusion_sq(x, theta.beta);
                Ok([
                    ab * d1g1,
                    0.5 * bv * d2g1,
                    ab * d1g2,
                    0.5 * bv * d2g2,
                    v0 * d1g1 * d1g1,
                    v0 * d1g1 * d1g2,
                    v0 * d1g2 * d1g2,
                    0.5 * (v0 * v0 + 0.5 * (v0 - v).powi(2)) * d2g2 * d2g2,
                ])
            })
        },
        QUAD_REL_TOL,
    );
    let r = guard.finish(integrals)?;
    let s = Matrix2::new(r[0], r[1], r[2], r[3]);
    let v = Matrix2::new(r[4], r[5], r[5], r[6]);
    let (w1, w2) = (r[4], r[7]);
    let s_inv = invert(&s, "sensitivity matrix S")?;
    let cov_general = s_inv * v * s_inv.transpose();
    let cov_general = (cov_general + cov_general.transpose()) * 0.5;
    let cov_rate_optimal = Matrix2::new(w1 / (s[(0, 0)] * s[(0, 0)]), 0.0, 0.0, w2 / (s[(1, 1)] * s[(1, 1)]));
    let sigma = efficient_bound(model, theta0)?;
    Ok(AsymptoticsReport {
        estimator: ef.name().to_string(),
        model: model.name().to_string(),
        theta,
        theta0,
        S: to_mat2(&s),
        V: to_mat2(&v),
        W1: w1,
        W2: w2,
        cov_general: to_mat2(&cov_general),
        cov_rate_optimal: to_mat2(&cov_rate_optimal),
        sigma_bound: sigma,
    })
}

fn invert(m: &Matrix2<f64>, what: &str) -> Result<Matrix2<f64>> {
    let scale = m.amax();
    let det = m.determinant();
    if !(scale > 0.0) || !(det.abs() > 1e-12 * scale * scale) {
        return Err(Error::SingularMatrix(format!("{what} is singular (det = {det:e})")));
    }
    m.try_inverse().ok_or_else(|| Error::SingularMatrix(what.to_string()))
}

/// `Sigma(theta0) = diag(1 / int (d_alpha b)^2 / v mu, 2 / int (d_beta v / v)^2 mu)`.
pub fn efficient_bound(model: &dyn Diffusion, theta0: ParamPoint) -> Result<Mat2> {
    let law = StationaryLaw::new(model, theta0)?;
    let info = law.expectation_fixed(
        |x| {
            let v = model.diffusion_sq(x, theta0.beta);
            let ab = model.drift_dalpha(x, theta0.alpha);
            let bv = model.diffusion_sq_dbeta(x, theta0.beta);
            [ab * ab / v, (bv / v).powi(2)]
        },
        QUAD_REL_TOL,
    )?;
    if !(info[0] > 0.0) {
        return Err(Error::ZeroInformation("drift parameter (d_alpha b vanishes)".into()));
    }
    if !(info[1] > 0.0) {
        return Err(Error::ZeroInformation("diffusion parameter (d_beta v vanishes)".into()));
    }
    Ok([[1.0 / info[0], 0.0], [0.0, 2.0 / info[1]]])
}

/// `gamma(theta, theta0)` for each `theta`: the limit of `G_n(theta) / (n delta)`
/// under `theta0`, which must vanish only at `theta0`.
pub fn gamma_curve(
    ef: &dyn EstimatingFunction,
    model: &dyn Diffusion,
    theta0: ParamPoint,
    thetas: &[ParamPoint],
) -> Result<Vec<[f64; 2]>> {
    let law = StationaryLaw::new(model, theta0)?;
    thetas
        .iter()
        .map(|&theta| {
            let guard = Fallible::new();
            let r = law.expectation_fixed(
                |x| {
                    guard.run(|| {
                        let [d1g1, d1g2, d2g1, d2g2] = diagonal_derivatives(ef, model, theta, x)?;
                        let db = model.drift(x, theta0.alpha) - model.drift(x, theta.alpha);
                        let dv = model.diffusion_sq(x, theta0.beta) - model.diffusion_sq(x, theta.beta);
                        Ok([db * d1g1 + 0.5 * dv * d2g1, db * d1g2 + 0.5 * dv * d2g2])
                    })
                },
                QUAD_REL_TOL,
            );
            guard.finish(r)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CovarianceMode {
    General,
    RateOptimal,
}

impl fmt::Display for CovarianceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CovarianceMode::General => "general",
            CovarianceMode::RateOptimal => "rate-optimal",
        })
    }
}

impl FromStr for CovarianceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "general" => Ok(CovarianceMode::General),
            "rate-optimal" => Ok(CovarianceMode::RateOptimal),
            other => Err(Error::InvalidConfig(format!("unknown covariance mode `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalCovariance {
    pub s_hat: Mat2,
    /// `V_hat` in general mode, `diag`-relevant `W_hat` blocks in rate-optimal mode.
    pub v_or_w_hat: Mat2,
    pub cov_hat: Mat2,
    pub mode: CovarianceMode,
}

impl EmpiricalCovariance {
    /// Standard errors of `alpha_hat` and `beta_hat` for a path of `n`
    /// increments with step `delta`.
    pub fn standard_errors(&self, n: usize, delta: f64) -> (f64, f64) {
        let n = n as f64;
        let se_alpha = (self.cov_hat[0][0] / (n * delta)).sqrt();
        let beta_scale = match self.mode {
            CovarianceMode::General => n * delta,
            CovarianceMode::RateOptimal => n,
        };
        (se_alpha, (self.cov_hat[1][1] / beta_scale).sqrt())
    }
}

/// Sandwich estimators of the asymptotic covariance from the observed path.
pub fn empirical_covariance(
    ef: &dyn EstimatingFunction,
    path: &SamplePath,
    theta_hat: ParamPoint,
    mode: CovarianceMode,
) -> Result<EmpiricalCovariance> {
    let n = path.n();
    if n < 1 {
        return Err(Error::InsufficientData("path has no increments".into()));
    }
    let delta = path.delta;
    let mut jac = Matrix2::zeros();
    let mut outer = Matrix2::zeros();
    for w in path.values.windows(2) {
        let (g, j) = ef.eval_with_jac(delta, w[1], w[0], theta_hat)?;
        jac += j;
        outer += g * g.transpose();
    }
    let nd = n as f64 * delta;
    let s_hat = -jac / nd;
    let (middle, cov) = match mode {
        CovarianceMode::General => {
            let v_hat = outer / nd;
            let s_inv = invert(&s_hat, "empirical sensitivity matrix")?;
            let cov = s_inv * v_hat * s_inv.transpose();
            (v_hat, (cov + cov.transpose()) * 0.5)
        }
        CovarianceMode::RateOptimal => {
            let d = Matrix2::from_diagonal(&normalization(n, delta));
            let w_hat = d * outer * d;
            let (s11, s22) = (s_hat[(0, 0)], s_hat[(1, 1)]);
            if s11 == 0.0 || s22 == 0.0 {
                return Err(Error::SingularMatrix("empirical sensitivity has a zero diagonal entry".into()));
            }
            (w_hat, Matrix2::from_diagonal(&Vector2::new(w_hat[(0, 0)] / (s11 * s11), w_hat[(1, 1)] / (s22 * s22))))
        }
    };
    Ok(EmpiricalCovariance { s_hat: to_mat2(&s_hat), v_or_w_hat: to_mat2(&middle), cov_hat: to_mat2(&cov), mode })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estfun::{catalog, quadratic_ef, QuadraticWeights, ScalarWeight};
    use crate::moments::MomentEngine;
    use crate::model::{Cir, OrnsteinUhlenbeck};
    use crate::simulate::{simulate_path, sampling_schedule, PathSpec, SamplingRule, Scheme};
    use approx::assert_abs_diff_eq;
    use std::sync::Arc;

    fn ou() -> Arc<dyn Diffusion> {
        Arc::new(OrnsteinUhlenbeck)
    }

    #[test]
    fn ou_efficient_limits() {
        let m = ou();
        let ef = catalog("quad-exact-efficient", m.clone()).unwrap();
        let t = ParamPoint::new(1.0, 1.0);
        let r = theoretical_asymptotics(&*ef, &*m, t, t).unwrap();
        assert_abs_diff_eq!(r.S[0][0], 0.5, epsilon = 1e-6);
        assert_abs_diff_eq!(r.S[1][1], 2.0, epsilon = 1e-6);
        assert_abs_diff_eq!(r.S[1][0], 0.0, epsilon = 1e-8);
        assert_abs_diff_eq!(r.W1, 0.5, epsilon = 1e-6);
        assert_abs_diff_eq!(r.W2, 2.0, epsilon = 1e-6);
        assert_abs_diff_eq!(r.cov_rate_optimal[0][0], 2.0, epsilon = 1e-6);
        assert_abs_diff_eq!(r.cov_rate_optimal[1][1], 0.5, epsilon = 1e-6);
        assert_abs_diff_eq!(r.cov_general[0][0], 2.0, epsilon = 1e-6);
    }

    #[test]
    fn efficient_ef_attains_bound() {
        for name in ["quad-exact-efficient", "gh-quadratic", "local-gaussian", "euler"] {
            let m = ou();
            let ef = catalog(name, m.clone()).unwrap();
            let t = ParamPoint::new(1.5, 0.8);
            let r = theoretical_asymptotics(&*ef, &*m, t, t).unwrap();
            for k in 0..2 {
                assert_abs_diff_eq!(r.cov_rate_optimal[k][k], r.sigma_bound[k][k], epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn bounds() {
        let s = efficient_bound(&OrnsteinUhlenbeck, ParamPoint::new(1.0, 1.0)).unwrap();
        assert_abs_diff_eq!(s[0][0], 2.0, epsilon = 1e-8);
        assert_abs_diff_eq!(s[1][1], 0.5, epsilon = 1e-8);
        assert_eq!(s[0][1], 0.0);
        let cir = Cir::new(1.0).unwrap();
        let t = ParamPoint::new(1.0, 0.5);
        let s = efficient_bound(&cir, t).unwrap();
        // Gamma(8, 8): E[(x - 1)^2 / (0.25 x)] = 4 (E[x] - 2 + E[1/x]) = 4 / 7
        assert_abs_diff_eq!(s[0][0], 7.0 / 4.0, epsilon = 1e-8);
        assert_abs_diff_eq!(s[1][1], 0.25 / 2.0, epsilon = 1e-8);
    }

    #[test]
    fn zero_information() {
        let flat = crate::model::CustomDiffusion::new("flat", crate::model::StateInterval::real_line(), |x, _| -x, |_, b| b);
        assert!(matches!(efficient_bound(&flat, ParamPoint::new(1.0, 1.0)), Err(Error::ZeroInformation(_))));
    }

    #[test]
    fn gamma_values() {
        let m = ou();
        let ef = catalog("quad-exact-efficient", m.clone()).unwrap();
        let t0 = ParamPoint::new(1.0, 1.0);
        let g = gamma_curve(&*ef, &*m, t0, &[t0, ParamPoint::new(2.0, 1.0), ParamPoint::new(1.0, 1.2)]).unwrap();
        assert_abs_diff_eq!(g[0][0], 0.0, epsilon = 1e-8);
        assert_abs_diff_eq!(g[0][1], 0.0, epsilon = 1e-8);
        assert_abs_diff_eq!(g[1][0], -0.5, epsilon = 1e-7);
        assert_abs_diff_eq!(g[1][1], 0.0, epsilon = 1e-7);
        // 0.5 (1 - 1.44) * 2.4 / 1.44^2
        assert_abs_diff_eq!(g[2][0], 0.0, epsilon = 1e-7);
        assert_abs_diff_eq!(g[2][1], 0.5 * (1.0 - 1.44) * 2.4 / (1.44 * 1.44), epsilon = 1e-7);
    }

    #[test]
    fn w2_grows_away_from_beta0() {
        let m = ou();
        let weights = QuadraticWeights::Diagonal(ScalarWeight::drift_efficient(), ScalarWeight::constant(1.0));
        let ef = quadratic_ef(m.clone(), weights, MomentEngine::Exact).unwrap();
        let t0 = ParamPoint::new(1.0, 1.0);
        let at = theoretical_asymptotics(&ef, &*m, t0, t0).unwrap().W2;
        for b in [0.7, 0.9, 1.1, 1.4] {
            let off = theoretical_asymptotics(&ef, &*m, ParamPoint::new(1.0, b), t0).unwrap().W2;
            assert!(off > at, "beta {b}: {off} <= {at}");
        }
    }

    #[test]
    fn empirical_sensitivity_and_modes() {
        let m = ou();
        let ef = catalog("quad-exact-efficient", m.clone()).unwrap();
        let n = 20_000;
        let delta = sampling_schedule(SamplingRule::default(), n);
        let t = ParamPoint::new(1.0, 1.0);
        let p = simulate_path(&*m, t, &PathSpec::new(n, delta, 0, Scheme::Exact)).unwrap();
        let gen = empirical_covariance(&*ef, &p, t, CovarianceMode::General).unwrap();
        let rate = empirical_covariance(&*ef, &p, t, CovarianceMode::RateOptimal).unwrap();
        assert!((0.45..=0.55).contains(&gen.s_hat[0][0]), "{:?}", gen.s_hat);
        let ratio = gen.cov_hat[0][0] / rate.cov_hat[0][0];
        assert!((0.9..=1.1).contains(&ratio), "ratio {ratio}");
        for c in [&gen, &rate] {
            let v = from_mat2(&c.v_or_w_hat);
            assert_abs_diff_eq!(v[(0, 1)], v[(1, 0)], epsilon = 1e-12);
            assert!(v.symmetric_eigenvalues().min() >= -1e-12);
            assert!(from_mat2(&c.cov_hat).symmetric_eigenvalues().min() >= -1e-12);
        }
    }
}

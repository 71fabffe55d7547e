//! Numerical checks of the optimality conditions at `delta = 0`, `y = x`,
//! of the approximate-martingale order, and of the small-`delta` identities
//! `sum_i C(k, i) L^{k-i} g^(i) (x, x) = 0`.
//!
//! A finite grid can only refute a condition; a passing report means that
//! no violation was found on the grid.

use std::fmt;

use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estfun::EstimatingFunction;
use crate::jet::{self, Jet};
use crate::model::{jet_power_series, Diffusion, ParamPoint, StateInterval, StationaryLaw};
use crate::quad;
use crate::stats::log_log_slope;

/// Tolerance for models with analytic derivatives.
pub const TOL_ANALYTIC: f64 = 1e-6;
/// Tolerance for models on the finite-difference path.
pub const TOL_FINITE_DIFFERENCE: f64 = 1e-4;

/// Step of the one-sided stencils in `delta`.
const DELTA_STEP: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Condition {
    /// `d_y g_2(0, x, x) = 0`
    Jacobsen,
    /// `d_alpha d_y^2 g_2(0, x, x) = 0`
    Extracond,
    /// `d_y g_1(0, x, x) = d_alpha b / v`
    DriftEfficiency,
    /// `d_y^2 g_2(0, x, x) = d_beta v / v^2`
    DiffusionEfficiency,
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Condition::Jacobsen => "jacobsen",
            Condition::Extracond => "extracond",
            Condition::DriftEfficiency => "drift-efficiency",
            Condition::DiffusionEfficiency => "diffusion-efficiency",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub condition: Condition,
    pub grid: Vec<f64>,
    pub residuals: Vec<f64>,
    pub max_residual: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub summary: String,
}

impl ConditionReport {
    fn new(condition: Condition, grid: &[f64], residuals: Vec<f64>, tolerance: f64) -> Result<Self> {
        if let Some(i) = residuals.iter().position(|r| !r.is_finite()) {
            return Err(Error::NumericalDifferentiation(grid[i]));
        }
        let (imax, max_residual) = residuals
            .iter()
            .copied()
            .enumerate()
            .fold((0, 0.0f64), |(bi, bv), (i, v)| if v > bv { (i, v) } else { (bi, bv) });
        let pass = max_residual <= tolerance;
        let summary = if pass {
            format!("no violation found on grid of {} points", grid.len())
        } else {
            format!("violated: residual {max_residual:.3e} at x = {}", grid[imax])
        };
        Ok(ConditionReport { condition, grid: grid.to_vec(), residuals, max_residual, tolerance, pass, summary })
    }

    /// Residual at the grid point closest to `x`.
    pub fn residual_near(&self, x: f64) -> f64 {
        let i = self
            .grid
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - x).abs().total_cmp(&(b.1 - x).abs()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        self.residuals[i]
    }
}

/// 21 stationary quantiles at levels `0.025, 0.07, ..., 0.975`.
pub fn default_grid(model: &dyn Diffusion, theta: ParamPoint) -> Result<Vec<f64>> {
    Ok(StationaryLaw::new(model, theta)?.quantile_grid(0.025, 0.975, 21))
}

pub fn default_tolerance(model: &dyn Diffusion) -> f64 {
    if model.analytic_derivatives() {
        TOL_ANALYTIC
    } else {
        TOL_FINITE_DIFFERENCE
    }
}

fn y_step(x: f64, iv: StateInterval) -> f64 {
    let h = 1e-4 * (1.0 + x.abs());
    let room = (x - iv.lower).min(iv.upper - x) / 2.5;
    h.min(room)
}

/// First and second `y`-derivatives of `g(0, y, x)` at `y = x` (5-point stencils).
fn y_derivatives(
    ef: &dyn EstimatingFunction,
    iv: StateInterval,
    x: f64,
    theta: ParamPoint,
) -> Result<(Vector2<f64>, Vector2<f64>)> {
    let h = y_step(x, iv);
    let g = |k: f64| ef.eval(0.0, x + k * h, x, theta);
    let (m2, m1, z, p1, p2) = (g(-2.0)?, g(-1.0)?, g(0.0)?, g(1.0)?, g(2.0)?);
    let d1 = (m2 - m1 * 8.0 + p1 * 8.0 - p2) / (12.0 * h);
    let d2 = (-m2 + m1 * 16.0 - z * 30.0 + p1 * 16.0 - p2) / (12.0 * h * h);
    Ok((d1, d2))
}

/// `[d_y g_1, d_y g_2, d_y^2 g_1, d_y^2 g_2]` at `delta = 0`, `y = x`, for each grid point.
pub fn diagonal_derivatives(
    ef: &dyn EstimatingFunction,
    model: &dyn Diffusion,
    theta: ParamPoint,
    x: f64,
) -> Result<[f64; 4]> {
    let iv = model.interval();
    iv.check(x)?;
    let (d1, d2) = y_derivatives(ef, iv, x, theta)?;
    Ok([d1[0], d1[1], d2[0], d2[1]])
}

fn check_grid(model: &dyn Diffusion, grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig("empty grid".into()));
    }
    let iv = model.interval();
    grid.iter().try_for_each(|&x| iv.check(x))
}

/// Jacobsen's condition and `d_alpha d_y^2 g_2(0, x, x) = 0`.
pub fn check_rate_optimality(
    ef: &dyn EstimatingFunction,
    model: &dyn Diffusion,
    theta: ParamPoint,
    grid: &[f64],
    tol: f64,
) -> Result<[ConditionReport; 2]> {
    check_grid(model, grid)?;
    let iv = model.interval();
    let mut jacobsen = Vec::with_capacity(grid.len());
    let mut extra = Vec::with_capacity(grid.len());
    for &x in grid {
        let (d1, _) = y_derivatives(ef, iv, x, theta)?;
        jacobsen.push(d1[1].abs());
        let e = 1e-3 * (1.0 + theta.alpha.abs());
        let d2 = |k: f64| y_derivatives(ef, iv, x, theta.shifted(0, k * e)).map(|d| d.1[1]);
        let da = (d2(-2.0)? - 8.0 * d2(-1.0)? + 8.0 * d2(1.0)? - d2(2.0)?) / (12.0 * e);
        extra.push(da.abs());
    }
    Ok([
        ConditionReport::new(Condition::Jacobsen, grid, jacobsen, tol)?,
        ConditionReport::new(Condition::Extracond, grid, extra, tol)?,
    ])
}

/// `d_y g_1(0, x, x) = d_alpha b / v` and `d_y^2 g_2(0, x, x) = d_beta v / v^2`.
pub fn check_efficiency(
    ef: &dyn EstimatingFunction,
    model: &dyn Diffusion,
    theta: ParamPoint,
    grid: &[f64],
    tol: f64,
) -> Result<[ConditionReport; 2]> {
    check_grid(model, grid)?;
    let iv = model.interval();
    let mut drift = Vec::with_capacity(grid.len());
    let mut diffusion = Vec::with_capacity(grid.len());
    for &x in grid {
        let (d1, d2) = y_derivatives(ef, iv, x, theta)?;
        let v = model.diffusion_sq(x, theta.beta);
        drift.push((d1[0] - model.drift_dalpha(x, theta.alpha) / v).abs());
        diffusion.push((d2[1] - model.diffusion_sq_dbeta(x, theta.beta) / (v * v)).abs());
    }
    Ok([
        ConditionReport::new(Condition::DriftEfficiency, grid, drift, tol)?,
        ConditionReport::new(Condition::DiffusionEfficiency, grid, diffusion, tol)?,
    ])
}

/// How conditional expectations are computed by [`probe_martingale_order`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProbeEngine {
    /// Gauss-Hermite quadrature against the exact Gaussian transition law.
    Exact,
    /// Sub-stepped Euler simulation from `x`.
    MonteCarlo { draws: usize, substeps: usize, seed: u64 },
}

impl ProbeEngine {
    pub fn monte_carlo(seed: u64) -> Self {
        ProbeEngine::MonteCarlo { draws: 1_000_000, substeps: 20, seed }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FittedOrder {
    /// Conditional mean below `1e-12` on the whole grid.
    Exact,
    /// Monte Carlo means are within noise of zero on the whole grid.
    Indistinguishable,
    Slope(f64),
}

impl FittedOrder {
    pub fn slope(&self) -> Option<f64> {
        match self {
            FittedOrder::Slope(s) => Some(*s),
            _ => None,
        }
    }
}

impl fmt::Display for FittedOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FittedOrder::Exact => write!(f, "exact"),
            FittedOrder::Indistinguishable => write!(f, "exact/indistinguishable"),
            FittedOrder::Slope(s) => write!(f, "{s:.3}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderProbe {
    pub x: f64,
    pub deltas: Vec<f64>,
    /// `|E[g_k(delta, X_delta, x) | X_0 = x]|` per delta and coordinate.
    pub conditional_means: Vec<[f64; 2]>,
    pub orders: [FittedOrder; 2],
}

/// Default delta grid of the martingale-order probe.
pub const PROBE_DELTAS: [f64; 4] = [0.1, 0.05, 0.025, 0.0125];

/// Fits the exponent of `|E[g(delta, X_delta, x) | x]|` against `delta`.
pub fn probe_martingale_order(
    ef: &dyn EstimatingFunction,
    model: &dyn Diffusion,
    theta: ParamPoint,
    x: f64,
    deltas: &[f64],
    engine: ProbeEngine,
) -> Result<OrderProbe> {
    model.interval().check(x)?;
    if deltas.len() < 2 || deltas.iter().any(|d| !(*d > 0.0)) {
        return Err(Error::InvalidConfig("probe needs at least two positive deltas".into()));
    }
    let mut means = Vec::with_capacity(deltas.len());
    let mut noise = Vec::with_capacity(deltas.len());
    for (k, &d) in deltas.iter().enumerate() {
        match engine {
            ProbeEngine::Exact => {
                if !model.gaussian_transition() {
                    return Err(Error::UnsupportedMomentEngine(format!(
                        "exact probe needs a Gaussian transition law; model `{}` has none",
                        model.name()
                    )));
                }
                let m = model
                    .exact_moments(d, x, theta)
                    .ok_or_else(|| Error::MissingExactMoments(model.name().into()))?;
                let (nodes, weights) = quad::gauss_hermite();
                let sd = m.var.max(0.0).sqrt();
                let mut acc = Vector2::zeros();
                for (z, w) in nodes.iter().zip(weights) {
                    acc += ef.eval(d, m.mean + sd * z, x, theta)? * *w;
                }
                means.push([acc[0].abs(), acc[1].abs()]);
                noise.push([0.0, 0.0]);
            }
            ProbeEngine::MonteCarlo { draws, substeps, seed } => {
                if draws < 2 || substeps == 0 {
                    return Err(Error::InvalidConfig("Monte Carlo probe needs draws >= 2 and substeps >= 1".into()));
                }
                let mut rng = ChaCha20Rng::seed_from_u64(seed);
                rng.set_stream(k as u64);
                let h = d / substeps as f64;
                let mut sum = Vector2::zeros();
                let mut sq = Vector2::zeros();
                for _ in 0..draws {
                    let mut s = x;
                    for _ in 0..substeps {
                        let p = model.project(s);
                        let z: f64 = rng.sample(StandardNormal);
                        s += model.drift(p, theta.alpha) * h + model.diffusion(p, theta.beta) * h.sqrt() * z;
                    }
                    let g = ef.eval(d, model.project(s), x, theta)?;
                    sum += g;
                    sq += g.component_mul(&g);
                }
                let n = draws as f64;
                let mean = sum / n;
                let var = (sq / n - mean.component_mul(&mean)) * (n / (n - 1.0));
                means.push([mean[0].abs(), mean[1].abs()]);
                noise.push([3.0 * (var[0].max(0.0) / n).sqrt(), 3.0 * (var[1].max(0.0) / n).sqrt()]);
            }
        }
    }
    let orders = [0usize, 1].map(|c| {
        let m: Vec<f64> = means.iter().map(|v| v[c]).collect();
        if m.iter().all(|v| *v < 1e-12) {
            FittedOrder::Exact
        } else if matches!(engine, ProbeEngine::MonteCarlo { .. }) && m.iter().zip(&noise).all(|(v, n)| *v <= n[c]) {
            FittedOrder::Indistinguishable
        } else {
            FittedOrder::Slope(log_log_slope(deltas, &m.iter().map(|v| v.max(1e-300)).collect::<Vec<_>>()))
        }
    });
    Ok(OrderProbe { x, deltas: deltas.to_vec(), conditional_means: means, orders })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lemma1Report {
    pub grid: Vec<f64>,
    /// `residuals[k][j]`: largest coordinate residual of identity `k` at grid point `j`.
    pub residuals: Vec<Vec<f64>>,
    pub max_residual: Vec<f64>,
}

const BINOMIAL: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [1.0, 2.0, 1.0]];

/// `g^(i)(y, x) = d^i g / d delta^i at delta = 0`, one-sided 4-point stencils.
fn delta_derivative(ef: &dyn EstimatingFunction, i: usize, y: f64, x: f64, theta: ParamPoint) -> Result<Vector2<f64>> {
    let h = DELTA_STEP;
    let g = |k: f64| ef.eval(k * h, y, x, theta);
    match i {
        0 => g(0.0),
        1 => Ok((g(0.0)? * -11.0 + g(1.0)? * 18.0 - g(2.0)? * 9.0 + g(3.0)? * 2.0) / (6.0 * h)),
        2 => Ok((g(0.0)? * 2.0 - g(1.0)? * 5.0 + g(2.0)? * 4.0 - g(3.0)?) / (h * h)),
        _ => Err(Error::InvalidConfig(format!("delta derivative of order {i} is not supported"))),
    }
}

/// Checks `sum_{i=0}^k C(k, i) L^{k-i} g^(i) (x, x) = 0` for `k = 0..=k_max`
/// (`k_max <= 2`), with `L` acting on `y`.
pub fn verify_lemma1(
    ef: &dyn EstimatingFunction,
    model: &dyn Diffusion,
    theta: ParamPoint,
    grid: &[f64],
    k_max: usize,
) -> Result<Lemma1Report> {
    if k_max > 2 {
        return Err(Error::InvalidConfig(format!(
            "identities beyond k = 2 need finite-difference orders that are numerically unstable (k_max = {k_max})"
        )));
    }
    check_grid(model, grid)?;
    let iv = model.interval();
    let mut residuals = vec![Vec::with_capacity(grid.len()); k_max + 1];
    for &x in grid {
        for (k, slot) in residuals.iter_mut().enumerate() {
            let mut total = Vector2::zeros();
            for i in 0..=k {
                let power = k - i;
                let term = if power == 0 {
                    delta_derivative(ef, i, x, x, theta)?
                } else {
                    let mut v = Vector2::zeros();
                    for c in 0..2 {
                        let f = |y: f64| delta_derivative(ef, i, y, x, theta).map(|g| g[c]).unwrap_or(f64::NAN);
                        let j: Jet = jet::finite_difference_jet(f, x, 2 * power, iv.lower, iv.upper);
                        let (values, _) = jet_power_series(model, theta, j, power, x)?;
                        v[c] = values[power];
                    }
                    v
                };
                total += term * BINOMIAL[k][i];
            }
            slot.push(total.amax());
        }
    }
    let max_residual = residuals.iter().map(|r| r.iter().fold(0.0f64, |a, b| a.max(*b))).collect();
    Ok(Lemma1Report { grid: grid.to_vec(), residuals, max_residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estfun::{catalog, constant_weight_quadratic_ef, MartingaleOrder};
    use crate::model::{Cir, OrnsteinUhlenbeck};
    use std::sync::Arc;

    const OU11: ParamPoint = ParamPoint { alpha: 1.0, beta: 1.0 };

    #[test]
    fn default_grid_is_stationary_quantiles() {
        let grid = default_grid(&OrnsteinUhlenbeck, OU11).unwrap();
        assert_eq!(grid.len(), 21);
        assert!((grid[10]).abs() < 1e-3);
        assert!((grid[0] + grid[20]).abs() < 1e-3);
    }

    #[test]
    fn non_rate_control_fails_jacobsen_with_2x() {
        let model: Arc<dyn Diffusion> = Arc::new(OrnsteinUhlenbeck);
        let ef = catalog("non-rate-control", model.clone()).unwrap();
        let [jac, _] = check_rate_optimality(&*ef, &*model, OU11, &[0.5, 2.0], TOL_ANALYTIC).unwrap();
        assert!(!jac.pass);
        assert!((jac.residual_near(2.0) - 4.0).abs() < 1e-6);
        assert!((jac.residual_near(0.5) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn constant_weight_fails_drift_efficiency() {
        let model: Arc<dyn Diffusion> = Arc::new(OrnsteinUhlenbeck);
        let ef = constant_weight_quadratic_ef(model.clone(), 1.0, 1.0).unwrap();
        let [drift, _] = check_efficiency(&ef, &*model, OU11, &[2.0], TOL_ANALYTIC).unwrap();
        assert!(!drift.pass);
        assert!((drift.max_residual - 3.0).abs() < 1e-6);
    }

    #[test]
    fn catalog_efficiency_on_cir() {
        let model: Arc<dyn Diffusion> = Arc::new(Cir::new(1.0).unwrap());
        let theta = ParamPoint::new(1.0, 0.5);
        let grid = default_grid(&*model, theta).unwrap();
        for name in ["quad-exact-efficient", "euler", "gh-quadratic", "gh-general", "local-gaussian"] {
            let ef = catalog(name, model.clone()).unwrap();
            for r in check_rate_optimality(&*ef, &*model, theta, &grid, TOL_ANALYTIC)
                .unwrap()
                .into_iter()
                .chain(check_efficiency(&*ef, &*model, theta, &grid, TOL_ANALYTIC).unwrap())
            {
                assert!(r.pass, "{name}: {} {}", r.condition, r.summary);
            }
        }
    }

    #[test]
    fn martingale_orders_on_ou() {
        let model: Arc<dyn Diffusion> = Arc::new(OrnsteinUhlenbeck);
        for name in ["quad-exact-efficient", "gh-quadratic", "gh-general", "non-rate-control"] {
            let ef = catalog(name, model.clone()).unwrap();
            assert_eq!(ef.order(), MartingaleOrder::Exact);
            let p = probe_martingale_order(&*ef, &*model, OU11, 2.0, &PROBE_DELTAS, ProbeEngine::Exact).unwrap();
            assert_eq!(p.orders, [FittedOrder::Exact; 2], "{name}: {:?}", p.conditional_means);
        }
        for name in ["euler", "quad-expansion-k2", "quad-expansion-k3", "quad-expansion-k4", "local-gaussian"] {
            let ef = catalog(name, model.clone()).unwrap();
            let MartingaleOrder::Approximate(k) = ef.order() else { panic!("{name} declared exact") };
            let p = probe_martingale_order(&*ef, &*model, OU11, 2.0, &PROBE_DELTAS, ProbeEngine::Exact).unwrap();
            for o in p.orders {
                match o {
                    FittedOrder::Slope(s) => assert!(s >= k as f64 - 0.3, "{name}: slope {s} for kappa {k}"),
                    FittedOrder::Exact => {}
                    FittedOrder::Indistinguishable => unreachable!(),
                }
            }
        }
    }

    #[test]
    fn euler_conditional_mean_oracle() {
        let model: Arc<dyn Diffusion> = Arc::new(OrnsteinUhlenbeck);
        let ef = catalog("euler", model.clone()).unwrap();
        let p = probe_martingale_order(&*ef, &*model, OU11, 2.0, &[0.1, 0.05], ProbeEngine::Exact).unwrap();
        // E[g_1 | x] / a_1 = x (e^{-alpha delta} - 1 + alpha delta)
        let expected = 2.0 * ((-0.1f64).exp() - 1.0 + 0.1) * 2.0;
        assert!((p.conditional_means[0][0] - expected).abs() < 1e-12);
    }

    #[test]
    fn lemma1_identities() {
        let model: Arc<dyn Diffusion> = Arc::new(OrnsteinUhlenbeck);
        let ef = catalog("euler", model.clone()).unwrap();
        let r = verify_lemma1(&*ef, &*model, OU11, &[-1.0, 0.5, 2.0], 2).unwrap();
        assert!(r.max_residual[0] < 1e-12);
        assert!(r.max_residual[1] < 1e-6, "{:?}", r.max_residual);
        // order 2 only: the k = 2 identity need not hold
        assert!(r.max_residual[2] > 0.1, "{:?}", r.max_residual);
        let exact = catalog("quad-exact-efficient", model.clone()).unwrap();
        let r = verify_lemma1(&*exact, &*model, OU11, &[-1.0, 0.5, 2.0], 2).unwrap();
        assert!(r.max_residual[2] < 1e-3, "{:?}", r.max_residual);
        assert!(verify_lemma1(&*ef, &*model, OU11, &[1.0], 3).is_err());
    }

    #[test]
    fn lemma1_detects_shift() {
        struct Shifted(Arc<dyn EstimatingFunction>);
        impl EstimatingFunction for Shifted {
            fn name(&self) -> &str {
                "shifted"
            }
            fn model(&self) -> &dyn Diffusion {
                self.0.model()
            }
            fn eval(&self, d: f64, y: f64, x: f64, t: ParamPoint) -> Result<Vector2<f64>> {
                Ok(self.0.eval(d, y, x, t)? + Vector2::new(0.01, 0.0))
            }
            fn order(&self) -> MartingaleOrder {
                self.0.order()
            }
            fn version_note(&self) -> &str {
                ""
            }
        }
        let model: Arc<dyn Diffusion> = Arc::new(OrnsteinUhlenbeck);
        let ef = Shifted(catalog("euler", model.clone()).unwrap());
        let r = verify_lemma1(&ef, &*model, OU11, &[1.0], 1).unwrap();
        assert!((r.max_residual[0] - 0.01).abs() < 1e-12);
    }

    #[test]
    fn monte_carlo_probe_runs() {
        let model: Arc<dyn Diffusion> = Arc::new(OrnsteinUhlenbeck);
        let ef = catalog("quad-exact-efficient", model.clone()).unwrap();
        let engine = ProbeEngine::MonteCarlo { draws: 20_000, substeps: 5, seed: 1 };
        let p = probe_martingale_order(&*ef, &*model, OU11, 1.0, &[0.1, 0.05], engine).unwrap();
        assert_eq!(p.conditional_means.len(), 2);
    }
}

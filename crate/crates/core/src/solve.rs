//! Root finding for `G_n(theta) = 0`: damped Newton on the normalized system
//! `D_n G_n` with multistart, a Nelder-Mead fallback and a Newton polish.

use std::cmp::Ordering;

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estfun::{eval_g_values, eval_g_with_jac, EstimatingFunction};
use crate::model::ParamPoint;
use crate::simulate::SamplePath;

/// Parameter rectangle `[alpha_min, alpha_max] x [beta_min, beta_max]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub alpha: (f64, f64),
    pub beta: (f64, f64),
}

/// Floor on the diffusion parameter.
pub const BETA_FLOOR: f64 = 1e-8;

impl Default for Bounds {
    fn default() -> Self {
        Bounds { alpha: (-1e6, 1e6), beta: (BETA_FLOOR, 1e6) }
    }
}

impl Bounds {
    pub fn contains(&self, p: ParamPoint) -> bool {
        p.alpha >= self.alpha.0 && p.alpha <= self.alpha.1 && p.beta >= self.beta.0 && p.beta <= self.beta.1
    }

    pub fn project(&self, p: ParamPoint) -> ParamPoint {
        ParamPoint::new(p.alpha.clamp(self.alpha.0, self.alpha.1), p.beta.clamp(self.beta.0, self.beta.1))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveSettings {
    /// Acceptance threshold on `max |D_n G_n|`.
    pub tol_g: f64,
    /// Newton stops when the relative step falls below this.
    pub tol_step: f64,
    pub max_iter: usize,
    /// Initial Newton step fraction in `(0, 1]`.
    pub damping: f64,
    pub multistart: Vec<ParamPoint>,
    pub bounds: Bounds,
}

impl Default for SolveSettings {
    fn default() -> Self {
        SolveSettings {
            tol_g: 1e-8,
            tol_step: 1e-14,
            max_iter: 50,
            damping: 1.0,
            multistart: vec![ParamPoint::new(1.0, 1.0)],
            bounds: Bounds::default(),
        }
    }
}

impl SolveSettings {
    /// `start` plus the four +-20% perturbations of one coordinate at a time.
    pub fn from_start(start: ParamPoint) -> Self {
        let mut starts = vec![start];
        for k in 0..2 {
            for s in [0.8, 1.2] {
                let mut p = start;
                if k == 0 {
                    p.alpha *= s
                } else {
                    p.beta *= s
                }
                starts.push(p);
            }
        }
        SolveSettings { multistart: starts, ..Default::default() }
    }

    /// Only the given start, no perturbations.
    pub fn single_start(start: ParamPoint) -> Self {
        SolveSettings { multistart: vec![start], ..Default::default() }
    }

    fn validate(&self) -> Result<()> {
        if !(self.tol_g > 0.0) || self.max_iter == 0 || !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidConfig("solver needs tol_g > 0, max_iter >= 1, damping in (0, 1]".into()));
        }
        if self.multistart.is_empty() {
            return Err(Error::InvalidConfig("solver needs at least one start".into()));
        }
        if !self.multistart.iter().any(|s| self.bounds.contains(*s)) {
            return Err(Error::InvalidConfig("no start lies inside the parameter bounds".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StartOutcome {
    Converged,
    SingularJacobian,
    MaxIterations,
    BoundsEscape,
    OutsideBounds,
    EvaluationError(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StartDiagnostic {
    pub start: ParamPoint,
    pub outcome: StartOutcome,
    pub theta: ParamPoint,
    pub g_norm: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub theta_hat: ParamPoint,
    /// `max |D_n G_n(theta_hat)|`
    pub g_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub start_used: ParamPoint,
    pub diagnostics: Vec<StartDiagnostic>,
}

/// `D_n = diag(1 / sqrt(n delta), 1 / (delta sqrt(n)))`.
pub fn normalization(n: usize, delta: f64) -> Vector2<f64> {
    let n = n as f64;
    Vector2::new(1.0 / (n * delta).sqrt(), 1.0 / (delta * n.sqrt()))
}

struct System<'a> {
    ef: &'a dyn EstimatingFunction,
    values: &'a [f64],
    delta: f64,
    scale: Vector2<f64>,
}

impl System<'_> {
    fn residual(&self, theta: ParamPoint) -> Result<Vector2<f64>> {
        let g = eval_g_values(self.ef, self.values, self.delta, theta)?;
        Ok(g.component_mul(&self.scale))
    }

    fn residual_and_jacobian(&self, theta: ParamPoint) -> Result<(Vector2<f64>, Matrix2<f64>)> {
        let (g, j) = eval_g_with_jac(self.ef, self.values, self.delta, theta)?;
        let d = Matrix2::from_diagonal(&self.scale);
        Ok((d * g, d * j))
    }
}

fn norm(v: &Vector2<f64>) -> f64 {
    if v.iter().all(|x| x.is_finite()) {
        v.amax()
    } else {
        f64::INFINITY
    }
}

fn is_singular(j: &Matrix2<f64>) -> bool {
    let sv = j.singular_values();
    let (max, min) = (sv.max(), sv.min());
    !(max.is_finite() && max > 0.0 && min > 1e-12 * max)
}

fn to_vec(p: ParamPoint) -> Vector2<f64> {
    Vector2::new(p.alpha, p.beta)
}

fn to_point(v: Vector2<f64>) -> ParamPoint {
    ParamPoint::new(v[0], v[1])
}

fn newton(sys: &System, start: ParamPoint, settings: &SolveSettings) -> StartDiagnostic {
    let mut diag = StartDiagnostic {
        start,
        outcome: StartOutcome::MaxIterations,
        theta: start,
        g_norm: f64::INFINITY,
        iterations: 0,
    };
    if !settings.bounds.contains(start) {
        diag.outcome = StartOutcome::OutsideBounds;
        return diag;
    }
    let mut theta = start;
    for it in 0..=settings.max_iter {
        let (f, j) = match sys.residual_and_jacobian(theta) {
            Ok(v) => v,
            Err(e) => {
                diag.outcome = StartOutcome::EvaluationError(e.to_string());
                return diag;
            }
        };
        diag.theta = theta;
        diag.g_norm = norm(&f);
        diag.iterations = it;
        let singular = is_singular(&j);
        if diag.g_norm <= settings.tol_g && !singular {
            let (t, g) = polish(sys, theta, f, j, settings);
            diag.theta = t;
            diag.g_norm = g;
            diag.outcome = StartOutcome::Converged;
            return diag;
        }
        if singular {
            diag.outcome = StartOutcome::SingularJacobian;
            return diag;
        }
        if it == settings.max_iter {
            break;
        }
        let step = match j.lu().solve(&(-f)) {
            Some(s) if s.iter().all(|v| v.is_finite()) => s,
            _ => {
                diag.outcome = StartOutcome::SingularJacobian;
                return diag;
            }
        };
        let mut lambda = settings.damping;
        let mut next = None;
        while lambda > 1e-6 {
            let cand = settings.bounds.project(to_point(to_vec(theta) + step * lambda));
            if let Ok(fc) = sys.residual(cand) {
                if norm(&fc) < diag.g_norm {
                    next = Some(cand);
                    break;
                }
            }
            lambda *= 0.5;
        }
        let Some(cand) = next else {
            // no decrease along the Newton direction: either at the precision floor or stuck
            let projected = settings.bounds.project(to_point(to_vec(theta) + step));
            diag.outcome = if projected != to_point(to_vec(theta) + step) {
                StartOutcome::BoundsEscape
            } else {
                StartOutcome::MaxIterations
            };
            return diag;
        };
        let rel = (to_vec(cand) - to_vec(theta)).amax() / (1.0 + to_vec(theta).amax());
        theta = cand;
        if rel < settings.tol_step {
            let f = match sys.residual_and_jacobian(theta) {
                Ok(v) => v,
                Err(e) => {
                    diag.outcome = StartOutcome::EvaluationError(e.to_string());
                    return diag;
                }
            };
            diag.theta = theta;
            diag.g_norm = norm(&f.0);
            diag.iterations = it + 1;
            diag.outcome = if diag.g_norm <= settings.tol_g && !is_singular(&f.1) {
                StartOutcome::Converged
            } else {
                StartOutcome::MaxIterations
            };
            return diag;
        }
    }
    diag
}

/// Full Newton steps past the acceptance threshold, kept while the residual
/// keeps shrinking.
fn polish(
    sys: &System,
    mut theta: ParamPoint,
    mut f: Vector2<f64>,
    mut j: Matrix2<f64>,
    settings: &SolveSettings,
) -> (ParamPoint, f64) {
    let mut best = norm(&f);
    for _ in 0..3 {
        let Some(step) = j.lu().solve(&(-f)) else { break };
        let cand = settings.bounds.project(to_point(to_vec(theta) + step));
        match sys.residual_and_jacobian(cand) {
            Ok((fc, jc)) if norm(&fc) < best && !is_singular(&jc) => {
                theta = cand;
                best = norm(&fc);
                f = fc;
                j = jc;
            }
            _ => break,
        }
    }
    (theta, best)
}

/// Nelder-Mead on `|D_n G_n|^2` within the bounds.
fn nelder_mead(sys: &System, start: ParamPoint, bounds: &Bounds, max_iter: usize) -> ParamPoint {
    let obj = |v: &Vector2<f64>| {
        let p = bounds.project(to_point(*v));
        sys.residual(p).map(|f| f.norm_squared()).unwrap_or(f64::INFINITY)
    };
    let x0 = to_vec(start);
    let mut simplex: Vec<(Vector2<f64>, f64)> = vec![x0, x0 + Vector2::new(0.1 * x0[0].abs().max(0.1), 0.0), x0 + Vector2::new(0.0, 0.1 * x0[1].abs().max(0.1))]
        .into_iter()
        .map(|v| (v, obj(&v)))
        .collect();
    for _ in 0..max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        if (simplex[2].1 - simplex[0].1).abs() <= 1e-30 + 1e-15 * simplex[0].1.abs() {
            break;
        }
        let centroid = (simplex[0].0 + simplex[1].0) / 2.0;
        let worst = simplex[2];
        let reflect = centroid + (centroid - worst.0);
        let fr = obj(&reflect);
        if fr < simplex[0].1 {
            let expand = centroid + (centroid - worst.0) * 2.0;
            let fe = obj(&expand);
            simplex[2] = if fe < fr { (expand, fe) } else { (reflect, fr) };
        } else if fr < simplex[1].1 {
            simplex[2] = (reflect, fr);
        } else {
            let contract = centroid + (worst.0 - centroid) * 0.5;
            let fc = obj(&contract);
            if fc < worst.1 {
                simplex[2] = (contract, fc);
            } else {
                let best = simplex[0].0;
                for s in simplex.iter_mut().skip(1) {
                    s.0 = best + (s.0 - best) * 0.5;
                    s.1 = obj(&s.0);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    bounds.project(to_point(simplex[0].0))
}

fn better(a: &StartDiagnostic, b: &StartDiagnostic) -> Ordering {
    a.g_norm
        .total_cmp(&b.g_norm)
        .then(a.theta.alpha.total_cmp(&b.theta.alpha))
        .then(a.theta.beta.total_cmp(&b.theta.beta))
}

/// Solves `G_n(theta) = 0` on a sample path.
pub fn solve_estimating_equation(
    ef: &dyn EstimatingFunction,
    path: &SamplePath,
    settings: &SolveSettings,
) -> Result<Estimate> {
    solve_values(ef, &path.values, path.delta, settings)
}

/// Solves `G_n(theta) = 0` on consecutive observations with step `delta`.
pub fn solve_values(
    ef: &dyn EstimatingFunction,
    values: &[f64],
    delta: f64,
    settings: &SolveSettings,
) -> Result<Estimate> {
    settings.validate()?;
    if values.len() < 2 {
        return Err(Error::InsufficientData(format!("{} observations, need at least 2", values.len())));
    }
    let sys = System { ef, values, delta, scale: normalization(values.len() - 1, delta) };
    let mut diagnostics = Vec::with_capacity(settings.multistart.len());
    for &start in &settings.multistart {
        let mut d = newton(&sys, start, settings);
        if d.outcome != StartOutcome::Converged
            && !matches!(d.outcome, StartOutcome::OutsideBounds | StartOutcome::SingularJacobian)
        {
            let polished_start = nelder_mead(&sys, start, &settings.bounds, 400);
            let mut polished = newton(&sys, polished_start, settings);
            polished.start = start;
            polished.iterations += d.iterations;
            if polished.outcome == StartOutcome::Converged || better(&polished, &d) == Ordering::Less {
                d = polished;
            }
        }
        log::debug!("start {:?}: {:?} after {} iterations", start, d.outcome, d.iterations);
        diagnostics.push(d);
    }
    let best_converged = diagnostics
        .iter()
        .filter(|d| d.outcome == StartOutcome::Converged)
        .min_by(|a, b| better(a, b))
        .cloned();
    match best_converged {
        Some(d) => Ok(Estimate {
            theta_hat: d.theta,
            g_norm: d.g_norm,
            iterations: d.iterations,
            converged: true,
            start_used: d.start,
            diagnostics,
        }),
        None => {
            let best = diagnostics
                .iter()
                .filter(|d| d.g_norm.is_finite())
                .min_by(|a, b| better(a, b))
                .map(|d| Estimate {
                    theta_hat: d.theta,
                    g_norm: d.g_norm,
                    iterations: d.iterations,
                    converged: false,
                    start_used: d.start,
                    diagnostics: Vec::new(),
                });
            Err(Error::NoConvergence { diagnostics, best })
        }
    }
}

/// Scalar root of the first coordinate in `alpha` with `beta` held fixed
/// (damped Newton with a derivative from the estimating function's Jacobian).
pub fn solve_alpha(
    ef: &dyn EstimatingFunction,
    values: &[f64],
    delta: f64,
    beta: f64,
    start_alpha: f64,
    settings: &SolveSettings,
) -> Result<Estimate> {
    if values.len() < 2 {
        return Err(Error::InsufficientData(format!("{} observations, need at least 2", values.len())));
    }
    let scale = normalization(values.len() - 1, delta)[0];
    let start = ParamPoint::new(start_alpha, beta);
    let mut theta = start;
    let mut diag = StartDiagnostic { start, outcome: StartOutcome::MaxIterations, theta, g_norm: f64::INFINITY, iterations: 0 };
    for it in 0..=settings.max_iter {
        let (g, j) = eval_g_with_jac(ef, values, delta, theta)?;
        let f = g[0] * scale;
        let df = j[(0, 0)] * scale;
        diag.theta = theta;
        diag.g_norm = f.abs();
        diag.iterations = it;
        if diag.g_norm <= settings.tol_g && df != 0.0 {
            let cand = ParamPoint::new(theta.alpha - f / df, beta);
            let fc = eval_g_values(ef, values, delta, cand)?[0] * scale;
            if fc.abs() < diag.g_norm {
                diag.theta = cand;
                diag.g_norm = fc.abs();
            }
            diag.outcome = StartOutcome::Converged;
            break;
        }
        if !(df.abs() > 0.0) || !df.is_finite() {
            diag.outcome = StartOutcome::SingularJacobian;
            break;
        }
        let step = -f / df;
        let mut lambda = settings.damping;
        loop {
            let cand = ParamPoint::new((theta.alpha + lambda * step).clamp(settings.bounds.alpha.0, settings.bounds.alpha.1), beta);
            let fc = eval_g_values(ef, values, delta, cand)?[0] * scale;
            if fc.abs() < diag.g_norm || lambda < 1e-6 {
                theta = cand;
                break;
            }
            lambda *= 0.5;
        }
    }
    if diag.outcome == StartOutcome::Converged {
        Ok(Estimate {
            theta_hat: diag.theta,
            g_norm: diag.g_norm,
            iterations: diag.iterations,
            converged: true,
            start_used: start,
            diagnostics: vec![diag],
        })
    } else {
        Err(Error::NoConvergence { diagnostics: vec![diag], best: None })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estfun::{catalog, quadratic_ef, MartingaleOrder, QuadraticWeights, ScalarWeight};
    use crate::model::{Diffusion, OrnsteinUhlenbeck};
    use crate::moments::MomentEngine;
    use crate::simulate::{simulate_path, PathSpec, Scheme};
    use approx::assert_abs_diff_eq;
    use std::sync::Arc;

    fn linear_ef() -> Arc<dyn EstimatingFunction> {
        let weights = QuadraticWeights::Diagonal(ScalarWeight::new(|x, _, _| x), ScalarWeight::constant(0.0));
        Arc::new(quadratic_ef(Arc::new(OrnsteinUhlenbeck), weights, MomentEngine::Exact).unwrap())
    }

    #[test]
    fn normalization_entries() {
        let d = normalization(100, 0.1);
        assert_abs_diff_eq!(d[0], 0.316_227_766_016_837_94, epsilon = 1e-15);
        assert_abs_diff_eq!(d[1], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn three_point_closed_form() {
        let values = [1.0, 0.8, 0.9];
        let expected = -(1.52f64 / 1.64).ln() / 0.5;
        let ef = linear_ef();
        let est = solve_alpha(&*ef, &values, 0.5, 1.0, 1.0, &SolveSettings::default()).unwrap();
        assert_abs_diff_eq!(est.theta_hat.alpha, expected, epsilon = 1e-10);
        let g = eval_g_values(&*ef, &values, 0.5, est.theta_hat).unwrap();
        assert!(g[0].abs() < 1e-9);
    }

    #[test]
    fn root_at_start_needs_no_iterations() {
        let model: Arc<dyn Diffusion> = Arc::new(OrnsteinUhlenbeck);
        let ef = catalog("quad-exact-efficient", model.clone()).unwrap();
        let p = simulate_path(&*model, ParamPoint::new(1.0, 1.0), &PathSpec::new(2000, 0.05, 9, Scheme::Exact)).unwrap();
        let est = solve_estimating_equation(&*ef, &p, &SolveSettings::single_start(ParamPoint::new(1.0, 1.0))).unwrap();
        let again = solve_estimating_equation(&*ef, &p, &SolveSettings::single_start(est.theta_hat)).unwrap();
        assert!(again.iterations <= 1);
        assert_abs_diff_eq!(again.theta_hat.alpha, est.theta_hat.alpha, epsilon = 1e-10);
    }

    #[test]
    fn coordinate_scaling_leaves_root_unchanged() {
        struct Scaled(Arc<dyn EstimatingFunction>, f64, f64);
        impl EstimatingFunction for Scaled {
            fn name(&self) -> &str {
                "scaled"
            }
            fn model(&self) -> &dyn Diffusion {
                self.0.model()
            }
            fn eval(&self, d: f64, y: f64, x: f64, t: ParamPoint) -> Result<Vector2<f64>> {
                let g = self.0.eval(d, y, x, t)?;
                Ok(Vector2::new(self.1 * g[0], self.2 * g[1]))
            }
            fn order(&self) -> MartingaleOrder {
                self.0.order()
            }
            fn version_note(&self) -> &str {
                ""
            }
        }
        let model: Arc<dyn Diffusion> = Arc::new(OrnsteinUhlenbeck);
        let ef = catalog("quad-exact-efficient", model.clone()).unwrap();
        let p = simulate_path(&*model, ParamPoint::new(1.0, 1.0), &PathSpec::new(3000, 0.03, 4, Scheme::Exact)).unwrap();
        let settings = SolveSettings::from_start(ParamPoint::new(0.7, 0.8));
        let base = solve_estimating_equation(&*ef, &p, &settings).unwrap();
        let scaled = Scaled(ef, -3.0, 0.25);
        let other = solve_estimating_equation(&scaled, &p, &settings).unwrap();
        assert_abs_diff_eq!(base.theta_hat.alpha, other.theta_hat.alpha, epsilon = 1e-10);
        assert_abs_diff_eq!(base.theta_hat.beta, other.theta_hat.beta, epsilon = 1e-10);
    }

    #[test]
    fn degenerate_beta_reports_no_convergence() {
        let weights = QuadraticWeights::Diagonal(ScalarWeight::drift_efficient(), ScalarWeight::constant(0.0));
        let ef = quadratic_ef(Arc::new(OrnsteinUhlenbeck), weights, MomentEngine::Expansion(2)).unwrap();
        // drift-only expansion: g_2 = 0 and g_1 does not depend on beta through F
        let p = simulate_path(&OrnsteinUhlenbeck, ParamPoint::new(1.0, 1.0), &PathSpec::new(500, 0.05, 2, Scheme::Exact)).unwrap();
        match solve_estimating_equation(&ef, &p, &SolveSettings::from_start(ParamPoint::new(1.0, 1.0))) {
            Err(Error::NoConvergence { diagnostics, .. }) => {
                assert_eq!(diagnostics.len(), 5);
                assert!(diagnostics.iter().all(|d| d.outcome == StartOutcome::SingularJacobian));
            }
            other => panic!("expected NoConvergence, got {other:?}"),
        }
    }
}

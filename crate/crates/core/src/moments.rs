//! Conditional moments of the transition law: closed forms where the model
//! provides them, otherwise truncated generator expansions in `delta`.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estfun::Basis;
use crate::jet::Jet;
use crate::model::{jet_power_series, ConditionalMoments, Diffusion, ParamPoint, Polynomial, MAX_GENERATOR_POWER};
use crate::quad;

/// Source of conditional expectations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MomentEngine {
    /// Closed-form moments (and Gaussian transition law where declared).
    Exact,
    /// `pi^{kappa, delta} f = sum_{i < kappa} delta^i / i! L^i f`.
    Expansion(u32),
}

impl MomentEngine {
    pub fn expansion(kappa: u32) -> Result<Self> {
        if !(2..=MAX_GENERATOR_POWER as u32 + 1).contains(&kappa) {
            return Err(Error::UnsupportedOrder(kappa));
        }
        Ok(MomentEngine::Expansion(kappa))
    }
}

impl fmt::Display for MomentEngine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MomentEngine::Exact => write!(f, "exact"),
            MomentEngine::Expansion(k) => write!(f, "expansion-k{k}"),
        }
    }
}

impl FromStr for MomentEngine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(MomentEngine::Exact),
            other => {
                let k = other
                    .strip_prefix("expansion-k")
                    .or_else(|| other.strip_prefix("expansion"))
                    .and_then(|k| k.trim_start_matches(['-', ':']).parse::<u32>().ok())
                    .ok_or_else(|| Error::UnsupportedMomentEngine(other.to_string()))?;
                MomentEngine::expansion(k)
            }
        }
    }
}

fn factorials(k: usize) -> Vec<f64> {
    let mut out = vec![1.0; k + 1];
    for i in 1..=k {
        out[i] = out[i - 1] * i as f64;
    }
    out
}

/// `F`, `phi` and their parameter partials at `(delta, x, theta)`.
pub fn conditional_moments(
    model: &dyn Diffusion,
    engine: MomentEngine,
    delta: f64,
    x: f64,
    theta: ParamPoint,
) -> Result<ConditionalMoments> {
    match engine {
        MomentEngine::Exact => model
            .exact_moments(delta, x, theta)
            .ok_or_else(|| Error::MissingExactMoments(model.name().to_string())),
        MomentEngine::Expansion(kappa) => {
            let kappa = MomentEngine::expansion(kappa).map(|_| kappa as usize)?;
            let k_max = kappa - 1;
            let fact = factorials(k_max);
            let series = |p: &Polynomial| -> Result<(f64, [f64; 2])> {
                let (values, partials) =
                    jet_power_series(model, theta, crate::model::ScalarField::jet(p, x, 2 * k_max)?, k_max, x)?;
                let mut v = 0.0;
                let mut d = [0.0; 2];
                for i in 0..=k_max {
                    let w = delta.powi(i as i32) / fact[i];
                    v += w * values[i];
                    d[0] += w * partials[i][0];
                    d[1] += w * partials[i][1];
                }
                Ok((v, d))
            };
            model.interval().check(x)?;
            let (mean, dmean) = series(&Polynomial::monomial(1))?;
            let (second, dsecond) = series(&Polynomial::centered_power(x, 2))?;
            let shift = mean - x;
            Ok(ConditionalMoments {
                mean,
                var: second - shift * shift,
                dmean,
                dvar: [dsecond[0] - 2.0 * shift * dmean[0], dsecond[1] - 2.0 * shift * dmean[1]],
            })
        }
    }
}

/// Conditional covariance `C` (N x N) of `f(X_delta)` and the sensitivity
/// `R = d_theta pi f` (2 x N), both given `X_0 = x`.
#[derive(Clone, Debug)]
pub struct BasisMoments {
    pub mean: Vec<f64>,
    pub cov: DMatrix<f64>,
    pub sensitivity: DMatrix<f64>,
}

/// Exact basis moments under a Gaussian transition law (Gauss-Hermite, 64 nodes).
pub fn basis_moments_exact(
    model: &dyn Diffusion,
    basis: &Basis,
    delta: f64,
    x: f64,
    theta: ParamPoint,
) -> Result<BasisMoments> {
    if !model.gaussian_transition() {
        return Err(Error::UnsupportedMomentEngine(format!(
            "exact basis moments need a Gaussian transition law; model `{}` has none",
            model.name()
        )));
    }
    let m = model
        .exact_moments(delta, x, theta)
        .ok_or_else(|| Error::MissingExactMoments(model.name().to_string()))?;
    let n = basis.len();
    let (nodes, weights) = quad::gauss_hermite();
    let sd = m.var.max(0.0).sqrt();
    let mut mean = vec![0.0; n];
    let mut second = DMatrix::<f64>::zeros(n, n);
    let mut d1 = vec![0.0; n];
    let mut d2 = vec![0.0; n];
    let mut jets = Vec::with_capacity(n);
    for (z, w) in nodes.iter().zip(weights) {
        let y = m.mean + sd * z;
        jets.clear();
        for j in 0..n {
            jets.push(basis.jet(j, y, 2)?);
        }
        for i in 0..n {
            mean[i] += w * jets[i].value();
            d1[i] += w * jets[i].deriv(1);
            d2[i] += w * jets[i].deriv(2);
            for j in 0..=i {
                second[(i, j)] += w * jets[i].value() * jets[j].value();
            }
        }
    }
    let mut cov = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let c = second[(i, j)] - mean[i] * mean[j];
            cov[(i, j)] = c;
            cov[(j, i)] = c;
        }
    }
    let mut sensitivity = DMatrix::zeros(2, n);
    for k in 0..2 {
        for j in 0..n {
            sensitivity[(k, j)] = d1[j] * m.dmean[k] + 0.5 * d2[j] * m.dvar[k];
        }
    }
    Ok(BasisMoments { mean, cov, sensitivity })
}

/// Taylor coefficients in `delta` of the basis moments: `cov = sum_k c[k] delta^k`,
/// `sensitivity = sum_k r[k] delta^k`, `k = 0..=k_max` (`c[0] = r[0] = 0`),
/// together with the mean coefficients `p[k][j] = L^k f_j / k!`.
#[derive(Clone, Debug)]
pub struct BasisSeries {
    pub mean: Vec<Vec<f64>>,
    pub cov: Vec<DMatrix<f64>>,
    pub sensitivity: Vec<DMatrix<f64>>,
}

pub fn basis_moment_series(
    model: &dyn Diffusion,
    basis: &Basis,
    x: f64,
    theta: ParamPoint,
    k_max: usize,
) -> Result<BasisSeries> {
    model.interval().check(x)?;
    let n = basis.len();
    let order = 2 * k_max;
    let fact = factorials(k_max);
    let jets: Vec<Jet> = (0..n).map(|j| basis.jet(j, x, order)).collect::<Result<_>>()?;
    let mut p = vec![vec![0.0; n]; k_max + 1];
    let mut sensitivity = vec![DMatrix::zeros(2, n); k_max + 1];
    for (j, f) in jets.iter().enumerate() {
        let (values, partials) = jet_power_series(model, theta, *f, k_max, x)?;
        for k in 0..=k_max {
            p[k][j] = values[k] / fact[k];
            sensitivity[k][(0, j)] = partials[k][0] / fact[k];
            sensitivity[k][(1, j)] = partials[k][1] / fact[k];
        }
    }
    let mut cov = vec![DMatrix::zeros(n, n); k_max + 1];
    for i in 0..n {
        for j in 0..=i {
            let (values, _) = jet_power_series(model, theta, jets[i] * jets[j], k_max, x)?;
            for k in 1..=k_max {
                let mut c = values[k] / fact[k];
                for a in 0..=k {
                    c -= p[a][i] * p[k - a][j];
                }
                cov[k][(i, j)] = c;
                cov[k][(j, i)] = c;
            }
        }
    }
    Ok(BasisSeries { mean: p, cov, sensitivity })
}

/// Truncated-expansion basis moments: series through `delta^(kappa-1)`.
pub fn basis_moments_expansion(
    model: &dyn Diffusion,
    basis: &Basis,
    kappa: u32,
    delta: f64,
    x: f64,
    theta: ParamPoint,
) -> Result<BasisMoments> {
    MomentEngine::expansion(kappa)?;
    let k_max = kappa as usize - 1;
    let s = basis_moment_series(model, basis, x, theta, k_max)?;
    let n = basis.len();
    let mut mean = vec![0.0; n];
    let mut cov = DMatrix::zeros(n, n);
    let mut sensitivity = DMatrix::zeros(2, n);
    for k in 0..=k_max {
        let w = delta.powi(k as i32);
        for j in 0..n {
            mean[j] += w * s.mean[k][j];
        }
        cov += &s.cov[k] * w;
        sensitivity += &s.sensitivity[k] * w;
    }
    Ok(BasisMoments { mean, cov, sensitivity })
}

pub fn basis_moments(
    model: &dyn Diffusion,
    basis: &Basis,
    engine: MomentEngine,
    delta: f64,
    x: f64,
    theta: ParamPoint,
) -> Result<BasisMoments> {
    match engine {
        MomentEngine::Exact => basis_moments_exact(model, basis, delta, x, theta),
        MomentEngine::Expansion(k) => basis_moments_expansion(model, basis, k, delta, x, theta),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Cir, OrnsteinUhlenbeck};
    use approx::assert_abs_diff_eq;

    #[test]
    fn engine_parsing() {
        assert_eq!("exact".parse::<MomentEngine>().unwrap(), MomentEngine::Exact);
        assert_eq!("expansion-k3".parse::<MomentEngine>().unwrap(), MomentEngine::Expansion(3));
        assert!(matches!("expansion-k1".parse::<MomentEngine>(), Err(Error::UnsupportedOrder(1))));
        assert!(matches!("expansion-k9".parse::<MomentEngine>(), Err(Error::UnsupportedOrder(9))));
        assert!("mc".parse::<MomentEngine>().is_err());
    }

    #[test]
    fn expansion_moments_converge_to_exact() {
        let theta = ParamPoint::new(1.2, 0.8);
        let cir = Cir::new(1.0).unwrap();
        let models: [&dyn Diffusion; 2] = [&OrnsteinUhlenbeck, &cir];
        for model in models {
            for kappa in 2..=4u32 {
                let errs: Vec<f64> = [0.04, 0.02, 0.01]
                    .iter()
                    .map(|&d| {
                        let e = model.exact_moments(d, 1.4, theta).unwrap();
                        let a = conditional_moments(model, MomentEngine::Expansion(kappa), d, 1.4, theta).unwrap();
                        (e.mean - a.mean).abs() + (e.var - a.var).abs()
                    })
                    .collect();
                let slope = crate::stats::log_log_slope(&[0.04, 0.02, 0.01], &errs);
                assert!((slope - kappa as f64).abs() < 0.3, "{} kappa {kappa}: slope {slope}", model.name());
            }
        }
    }

    #[test]
    fn expansion_partials_match_exact_at_small_delta() {
        let theta = ParamPoint::new(1.0, 1.0);
        let d = 1e-3;
        let e = OrnsteinUhlenbeck.exact_moments(d, 2.0, theta).unwrap();
        let a = conditional_moments(&OrnsteinUhlenbeck, MomentEngine::Expansion(4), d, 2.0, theta).unwrap();
        for k in 0..2 {
            assert_abs_diff_eq!(e.dmean[k], a.dmean[k], epsilon = 1e-11);
            assert_abs_diff_eq!(e.dvar[k], a.dvar[k], epsilon = 1e-11);
        }
    }

    #[test]
    fn basis_series_matches_exact_moments() {
        let theta = ParamPoint::new(1.0, 1.0);
        let basis = Basis::monomials(&[1, 2]);
        let d = 0.001;
        let exact = basis_moments_exact(&OrnsteinUhlenbeck, &basis, d, 2.0, theta).unwrap();
        let approx = basis_moments_expansion(&OrnsteinUhlenbeck, &basis, 4, d, 2.0, theta).unwrap();
        for i in 0..2 {
            assert_abs_diff_eq!(exact.mean[i], approx.mean[i], epsilon = 1e-8);
            for j in 0..2 {
                assert_abs_diff_eq!(exact.cov[(i, j)], approx.cov[(i, j)], epsilon = 1e-8);
                assert_abs_diff_eq!(exact.sensitivity[(i, j)], approx.sensitivity[(i, j)], epsilon = 1e-8);
            }
        }
        // Var(X_delta | x) = (1 - exp(-2 delta)) / 2
        assert_abs_diff_eq!(exact.cov[(0, 0)], -(-0.002f64).exp_m1() / 2.0, epsilon = 1e-13);
    }
}

use std::sync::OnceLock;

use rand::{Rng, RngCore};

use super::{Diffusion, ParamPoint, ScalarField};
use crate::error::{Error, Result};
use crate::quad;

/// Density cut-off relative to the peak used to truncate the state interval.
const TAIL_RATIO: f64 = 1e-12;
const PANELS: usize = 64;
const CDF_CELLS: usize = 4096;
const MAX_SCAN: usize = 200;

/// Normalized stationary law `mu_theta(x) = [s(x) v(x)]^-1 / Z` of a model.
///
/// Construction locates a truncation interval where the density exceeds
/// `1e-12` times its maximum and computes `Z` once; the CDF table used for
/// quantiles and sampling is built on first use.
#[derive(Debug)]
pub struct StationaryLaw<'a> {
    model: &'a dyn Diffusion,
    theta: ParamPoint,
    lo: f64,
    hi: f64,
    log_norm: f64,
    table: OnceLock<CdfTable>,
}

#[derive(Debug)]
struct CdfTable {
    grid: Vec<f64>,
    cdf: Vec<f64>,
    envelope: Vec<f64>,
    envelope_cdf: Vec<f64>,
}

impl<'a> StationaryLaw<'a> {
    pub fn new(model: &'a dyn Diffusion, theta: ParamPoint) -> Result<Self> {
        model.validate(theta)?;
        let iv = model.interval();
        let anchor = model.anchor();
        iv.check(anchor)?;
        let log_mu = |x: f64| model.log_unnormalized_density(x, theta);

        let mut peak = log_mu(anchor)?;
        if !peak.is_finite() {
            return Err(Error::Quadrature(format!("density not finite at anchor {anchor}")));
        }
        let cut = -TAIL_RATIO.ln();
        let scale = 1e-3 * anchor.abs().max(1.0);
        let mut ends = [anchor; 2];
        for (side, dir) in [(0usize, -1.0f64), (1, 1.0)] {
            let bound = if dir < 0.0 { iv.lower } else { iv.upper };
            let mut found = false;
            for k in 0..MAX_SCAN {
                let x = if bound.is_finite() {
                    bound + (anchor - bound) * 0.5f64.powi(k as i32 + 1)
                } else {
                    anchor + dir * scale * 2f64.powi(k as i32)
                };
                if !iv.contains(x) || x == anchor {
                    break;
                }
                let l = log_mu(x)?;
                if l.is_nan() {
                    return Err(Error::Quadrature(format!("density undefined at {x}")));
                }
                if l > peak {
                    peak = l;
                }
                ends[side] = x;
                if l < peak - cut {
                    found = true;
                    break;
                }
                if !bound.is_finite() && x.abs() > 1e15 {
                    return Err(Error::Quadrature(
                        "stationary density does not decay: tail mass is not integrable".into(),
                    ));
                }
            }
            if !found && !bound.is_finite() {
                return Err(Error::Quadrature("stationary density does not decay".into()));
            }
        }
        let [lo, hi] = ends;
        let z = quad::integrate(
            |x| [log_mu(x).map(|l| (l - peak).exp()).unwrap_or(f64::NAN)],
            lo,
            hi,
            PANELS,
            1e-11,
            0.0,
        )?[0];
        if !(z.is_finite() && z > 0.0) {
            return Err(Error::Quadrature(format!("normalization constant {z}")));
        }
        Ok(StationaryLaw { model, theta, lo, hi, log_norm: peak + z.ln(), table: OnceLock::new() })
    }

    pub fn theta(&self) -> ParamPoint {
        self.theta
    }

    /// Truncated support used for all integrals.
    pub fn support(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn density(&self, x: f64) -> Result<f64> {
        self.model.interval().check(x)?;
        Ok((self.model.log_unnormalized_density(x, self.theta)? - self.log_norm).exp())
    }

    fn density_unchecked(&self, x: f64) -> f64 {
        self.model
            .log_unnormalized_density(x, self.theta)
            .map(|l| (l - self.log_norm).exp())
            .unwrap_or(f64::NAN)
    }

    /// `int h mu` for several integrands at once, relative tolerance `1e-10`.
    pub fn expectation_vec<const N: usize>(&self, h: impl Fn(f64) -> [f64; N]) -> Result<[f64; N]> {
        quad::integrate(
            |x| {
                let w = self.density_unchecked(x);
                let mut v = h(x);
                for e in &mut v {
                    *e *= w;
                }
                v
            },
            self.lo,
            self.hi,
            PANELS,
            1e-10,
            1e-300,
        )
    }

    /// `int h mu` by composite Gauss-Legendre with panel doubling; for
    /// integrands built from finite-difference stencils.
    pub fn expectation_fixed<const N: usize>(&self, h: impl Fn(f64) -> [f64; N], rel_tol: f64) -> Result<[f64; N]> {
        quad::integrate_doubling(
            |x| {
                let w = self.density_unchecked(x);
                let mut v = h(x);
                for e in &mut v {
                    *e *= w;
                }
                v
            },
            self.lo,
            self.hi,
            rel_tol,
        )
    }

    pub fn expectation(&self, h: impl Fn(f64) -> f64) -> Result<f64> {
        Ok(self.expectation_vec(|x| [h(x)])?[0])
    }

    fn table(&self) -> &CdfTable {
        self.table.get_or_init(|| {
            let width = (self.hi - self.lo) / CDF_CELLS as f64;
            let grid: Vec<f64> = (0..=CDF_CELLS).map(|i| self.lo + i as f64 * width).collect();
            let dens: Vec<f64> = grid.iter().map(|&x| self.density_unchecked(x).max(0.0)).collect();
            let mut cdf = vec![0.0; CDF_CELLS + 1];
            let mut envelope = vec![0.0; CDF_CELLS];
            let mut envelope_cdf = vec![0.0; CDF_CELLS + 1];
            for i in 0..CDF_CELLS {
                let mid = self.density_unchecked(0.5 * (grid[i] + grid[i + 1])).max(0.0);
                cdf[i + 1] = cdf[i] + width * (dens[i] + 4.0 * mid + dens[i + 1]) / 6.0;
                envelope[i] = 1.1 * dens[i].max(mid).max(dens[i + 1]);
                envelope_cdf[i + 1] = envelope_cdf[i] + width * envelope[i];
            }
            let total = cdf[CDF_CELLS];
            cdf.iter_mut().for_each(|c| *c /= total);
            CdfTable { grid, cdf, envelope, envelope_cdf }
        })
    }

    /// Approximate quantile from the tabulated CDF (linear interpolation).
    pub fn quantile(&self, p: f64) -> f64 {
        let t = self.table();
        let p = p.clamp(0.0, 1.0);
        let i = t.cdf.partition_point(|&c| c < p).clamp(1, CDF_CELLS);
        let (c0, c1) = (t.cdf[i - 1], t.cdf[i]);
        let frac = if c1 > c0 { (p - c0) / (c1 - c0) } else { 0.5 };
        t.grid[i - 1] + frac * (t.grid[i] - t.grid[i - 1])
    }

    /// Evenly spaced quantiles `q_j = lo + j (hi - lo) / (count - 1)` of the law.
    pub fn quantile_grid(&self, lo: f64, hi: f64, count: usize) -> Vec<f64> {
        if count == 1 {
            return vec![self.quantile(0.5 * (lo + hi))];
        }
        (0..count)
            .map(|j| self.quantile(lo + (hi - lo) * j as f64 / (count - 1) as f64))
            .collect()
    }

    /// Rejection sampling with a piecewise-constant envelope over the table cells.
    pub fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        let t = self.table();
        let total = t.envelope_cdf[CDF_CELLS];
        loop {
            let u: f64 = rng.random::<f64>() * total;
            let i = t.envelope_cdf.partition_point(|&c| c <= u).clamp(1, CDF_CELLS) - 1;
            let x = t.grid[i] + rng.random::<f64>() * (t.grid[i + 1] - t.grid[i]);
            let accept: f64 = rng.random();
            if accept * t.envelope[i] <= self.density_unchecked(x) {
                return x;
            }
        }
    }
}

/// Normalized stationary density at `x`.
pub fn stationary_density(model: &dyn Diffusion, theta: ParamPoint, x: f64) -> Result<f64> {
    StationaryLaw::new(model, theta)?.density(x)
}

/// `int h mu_theta`.
pub fn stationary_expectation(model: &dyn Diffusion, theta: ParamPoint, h: &dyn ScalarField) -> Result<f64> {
    StationaryLaw::new(model, theta)?.expectation(|x| h.value(x))
}

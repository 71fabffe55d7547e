//! Quadrature: panelled adaptive Simpson for integrals against the
//! stationary law, Gauss-Hermite rules for Gaussian conditional laws.

use std::sync::OnceLock;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

const MAX_DEPTH: u32 = 40;
const MAX_EVALUATIONS: usize = 2_000_000;

/// Adaptive Simpson integration of a vector-valued integrand over `[a, b]`.
///
/// The interval is first cut into `panels` equal pieces (deterministic
/// ordering); each piece is refined until the Richardson error estimate is
/// below its share of `rel_tol * sum |coarse estimate|` (plus `abs_tol`).
pub fn integrate<const N: usize>(
    f: impl Fn(f64) -> [f64; N],
    a: f64,
    b: f64,
    panels: usize,
    rel_tol: f64,
    abs_tol: f64,
) -> Result<[f64; N]> {
    if !(a.is_finite() && b.is_finite()) || b < a {
        return Err(Error::Quadrature(format!("invalid interval [{a}, {b}]")));
    }
    if a == b {
        return Ok([0.0; N]);
    }
    let panels = panels.max(1);
    let width = (b - a) / panels as f64;

    let mut coarse = Vec::with_capacity(panels);
    let mut scale = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * width;
        let hi = if p + 1 == panels { b } else { lo + width };
        let mid = 0.5 * (lo + hi);
        let (flo, fmid, fhi) = (f(lo), f(mid), f(hi));
        let s = simpson(lo, hi, &flo, &fmid, &fhi);
        scale += s.iter().map(|v| v.abs()).fold(0.0, f64::max);
        coarse.push((lo, hi, flo, fmid, fhi, s));
    }
    let tol = rel_tol * scale + abs_tol;
    let panel_tol = (tol / panels as f64).max(f64::MIN_POSITIVE);

    let mut total = [0.0; N];
    let mut state = RefineState { ok: true, budget: MAX_EVALUATIONS };
    for (lo, hi, flo, fmid, fhi, s) in coarse {
        let v = refine(&f, lo, hi, flo, fmid, fhi, s, panel_tol, MAX_DEPTH, &mut state);
        for (t, x) in total.iter_mut().zip(v) {
            *t += x;
        }
    }
    if total.iter().any(|v| !v.is_finite()) {
        return Err(Error::Quadrature("integrand produced a non-finite value".into()));
    }
    if !state.ok {
        return Err(Error::Quadrature(format!(
            "adaptive Simpson did not reach tolerance {tol:e} on [{a}, {b}]"
        )));
    }
    Ok(total)
}

/// Scalar convenience wrapper around [`integrate`].
pub fn integrate_scalar(
    f: impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    panels: usize,
    rel_tol: f64,
) -> Result<f64> {
    integrate(|x| [f(x)], a, b, panels, rel_tol, 0.0).map(|v| v[0])
}

fn simpson<const N: usize>(a: f64, b: f64, fa: &[f64; N], fm: &[f64; N], fb: &[f64; N]) -> [f64; N] {
    let h = (b - a) / 6.0;
    let mut out = [0.0; N];
    for i in 0..N {
        out[i] = h * (fa[i] + 4.0 * fm[i] + fb[i]);
    }
    out
}

struct RefineState {
    ok: bool,
    budget: usize,
}

#[allow(clippy::too_many_arguments)]
fn refine<const N: usize>(
    f: &impl Fn(f64) -> [f64; N],
    a: f64,
    b: f64,
    fa: [f64; N],
    fm: [f64; N],
    fb: [f64; N],
    whole: [f64; N],
    tol: f64,
    depth: u32,
    state: &mut RefineState,
) -> [f64; N] {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = simpson(a, m, &fa, &flm, &fm);
    let right = simpson(m, b, &fm, &frm, &fb);
    let mut err = 0.0f64;
    let mut out = [0.0; N];
    for i in 0..N {
        let delta = left[i] + right[i] - whole[i];
        err = err.max(delta.abs());
        out[i] = left[i] + right[i] + delta / 15.0;
    }
    if err.is_nan() {
        state.ok = false;
        return out;
    }
    if err <= 15.0 * tol {
        return out;
    }
    if depth == 0 || state.budget < 2 || (m - a) <= f64::EPSILON * a.abs().max(b.abs()) {
        state.ok = false;
        return out;
    }
    state.budget -= 2;
    let l = refine(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, state);
    let r = refine(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, state);
    let mut sum = [0.0; N];
    for i in 0..N {
        sum[i] = l[i] + r[i];
    }
    sum
}

/// Gauss-Legendre rule on `[-1, 1]` with `n` nodes: `(nodes, weights)`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let k = k as f64;
                let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 0 { 1.0 } else if n == 1 { x } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * p - pm) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn gauss_legendre_16() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(16))
}

/// Composite 16-point Gauss-Legendre rule on `panels` equal panels.
pub fn integrate_fixed<const N: usize>(f: impl Fn(f64) -> [f64; N], a: f64, b: f64, panels: usize) -> [f64; N] {
    let (nodes, weights) = gauss_legendre_16();
    let panels = panels.max(1);
    let width = (b - a) / panels as f64;
    let mut total = [0.0; N];
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * width;
        for (z, w) in nodes.iter().zip(weights) {
            let v = f(mid + 0.5 * width * z);
            for (t, e) in total.iter_mut().zip(v) {
                *t += 0.5 * width * w * e;
            }
        }
    }
    total
}

/// [`integrate_fixed`] with panel doubling from 16 panels until two successive
/// results agree to `rel_tol` (relative to the largest component).
///
/// Suited to integrands carrying small numerical noise (finite-difference
/// stencils), where adaptive refinement would chase the noise.
pub fn integrate_doubling<const N: usize>(
    f: impl Fn(f64) -> [f64; N],
    a: f64,
    b: f64,
    rel_tol: f64,
) -> Result<[f64; N]> {
    if !(a.is_finite() && b.is_finite()) || b < a {
        return Err(Error::Quadrature(format!("invalid interval [{a}, {b}]")));
    }
    let mut panels = 16;
    let mut prev = integrate_fixed(&f, a, b, panels);
    while panels < 2048 {
        panels *= 2;
        let next = integrate_fixed(&f, a, b, panels);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Quadrature("integrand produced a non-finite value".into()));
        }
        let scale = next.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let diff = next.iter().zip(&prev).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        if diff <= rel_tol * scale || scale == 0.0 {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::Quadrature(format!("panel doubling did not reach tolerance {rel_tol:e} on [{a}, {b}]")))
}

/// Gauss-Hermite rule for `E[h(Z)]`, `Z ~ N(0, 1)`: `(nodes, weights)`, weights sum to 1.
///
/// Golub-Welsch on the Jacobi matrix of the probabilists' Hermite polynomials;
/// exact for polynomials of degree below `2 * 64`.
pub fn gauss_hermite() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| golub_welsch_hermite(64))
}

fn golub_welsch_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut jacobi = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let off = (k as f64).sqrt();
        jacobi[(k - 1, k)] = off;
        jacobi[(k, k - 1)] = off;
    }
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    // symmetrize: the rule is even, and exact symmetry keeps odd moments at zero
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let j = n - 1 - i;
        nodes[i] = 0.5 * (pairs[i].0 - pairs[j].0);
        weights[i] = 0.5 * (pairs[i].1 + pairs[j].1);
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    (nodes, weights)
}

/// `E[h(m + s Z)]` for `Z ~ N(0, 1)`.
pub fn gaussian_expectation(mean: f64, sd: f64, h: impl Fn(f64) -> f64) -> f64 {
    let (nodes, weights) = gauss_hermite();
    nodes
        .iter()
        .zip(weights)
        .map(|(z, w)| w * h(mean + sd * z))
        .sum()
}

//! Equidistant sample paths `X_0, X_delta, ..., X_{n delta}` and sampling schedules.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Diffusion, ParamPoint, StationaryLaw};

/// Integration scheme for [`simulate_path`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Euler,
    Milstein,
    /// Draws from the Gaussian transition law (models with closed-form Gaussian transitions only).
    Exact,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Euler => "euler",
            Scheme::Milstein => "milstein",
            Scheme::Exact => "exact",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "euler" => Ok(Scheme::Euler),
            "milstein" => Ok(Scheme::Milstein),
            "exact" => Ok(Scheme::Exact),
            other => Err(Error::InvalidConfig(format!("unknown scheme `{other}`"))),
        }
    }
}

/// Observations on the grid `t_i = i delta`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplePath {
    pub values: Vec<f64>,
    pub delta: f64,
    pub seed: u64,
    /// Scheme name, or `"data"` for observed series.
    pub scheme: String,
    pub substeps: usize,
}

impl SamplePath {
    /// Wraps observed data.
    pub fn from_values(values: Vec<f64>, delta: f64) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InsufficientData(format!("{} observations, need at least 2", values.len())));
        }
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::InvalidConfig(format!("sampling step must be positive, got {delta}")));
        }
        Ok(SamplePath { values, delta, seed: 0, scheme: "data".into(), substeps: 1 })
    }

    /// Number of transitions `n`.
    pub fn n(&self) -> usize {
        self.values.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        self.n() as f64 * self.delta
    }

    /// Writes `index,time,value` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["index", "time", "value"])?;
        for (i, v) in self.values.iter().enumerate() {
            w.write_record(&[i.to_string(), (i as f64 * self.delta).to_string(), v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads `index,time,value` rows; the step is inferred from the time column.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            #[allow(dead_code)]
            index: usize,
            time: f64,
            value: f64,
        }
        let mut r = csv::Reader::from_reader(reader);
        let mut times = Vec::new();
        let mut values = Vec::new();
        for row in r.deserialize() {
            let row: Row = row?;
            times.push(row.time);
            values.push(row.value);
        }
        if values.len() < 2 {
            return Err(Error::InsufficientData(format!("{} rows, need at least 2", values.len())));
        }
        let n = (values.len() - 1) as f64;
        let delta = (times[times.len() - 1] - times[0]) / n;
        let tol = 1e-6 * delta.abs();
        if times.windows(2).any(|w| ((w[1] - w[0]) - delta).abs() > tol.max(1e-12)) {
            return Err(Error::InvalidConfig("time column is not equidistant".into()));
        }
        SamplePath::from_values(values, delta)
    }
}

/// Inputs of one simulated path.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathSpec {
    pub n: usize,
    pub delta: f64,
    pub seed: u64,
    pub scheme: Scheme,
    /// Integration substeps per observation interval; `None` picks the default
    /// (10 for `delta >= 1e-3`, else 1; always 1 for the exact scheme).
    pub substeps: Option<usize>,
    /// Initial value; drawn from the stationary law when absent.
    pub x0: Option<f64>,
}

impl PathSpec {
    pub fn new(n: usize, delta: f64, seed: u64, scheme: Scheme) -> Self {
        PathSpec { n, delta, seed, scheme, substeps: None, x0: None }
    }

    pub fn substeps(mut self, substeps: usize) -> Self {
        self.substeps = Some(substeps);
        self
    }

    pub fn x0(mut self, x0: f64) -> Self {
        self.x0 = Some(x0);
        self
    }

    pub fn effective_substeps(&self) -> usize {
        match (self.scheme, self.substeps) {
            (Scheme::Exact, _) => 1,
            (_, Some(s)) => s,
            (_, None) if self.delta >= 1e-3 => 10,
            _ => 1,
        }
    }
}

/// Seed of replication `index` derived from `master`: the first word of the
/// ChaCha20 stream number `index` keyed by `master`.
pub fn replication_seed(master: u64, index: u64) -> u64 {
    let mut rng = ChaCha20Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng.next_u64()
}

/// Simulates `n + 1` equidistant observations.
pub fn simulate_path(model: &dyn Diffusion, theta: ParamPoint, spec: &PathSpec) -> Result<SamplePath> {
    if spec.n == 0 {
        return Err(Error::InvalidConfig("n must be positive".into()));
    }
    if !(spec.delta > 0.0 && spec.delta.is_finite()) {
        return Err(Error::InvalidConfig(format!("sampling step must be positive, got {}", spec.delta)));
    }
    let substeps = spec.effective_substeps();
    if substeps == 0 {
        return Err(Error::InvalidConfig("substeps must be at least 1".into()));
    }
    if spec.scheme == Scheme::Exact
        && !(model.gaussian_transition() && model.exact_moments(spec.delta, model.anchor(), theta).is_some())
    {
        return Err(Error::SchemeUnavailable { scheme: spec.scheme.to_string(), model: model.name().into() });
    }
    model.validate(theta)?;
    let iv = model.interval();
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let x0 = match spec.x0 {
        Some(x) => {
            iv.check(x)?;
            x
        }
        None => match model.sample_stationary(theta, &mut rng) {
            Some(x) => x,
            None => StationaryLaw::new(model, theta)?.sample(&mut rng),
        },
    };

    let mut values = Vec::with_capacity(spec.n + 1);
    values.push(x0);
    let h = spec.delta / substeps as f64;
    let sqrt_h = h.sqrt();
    let mut state = x0;
    for i in 1..=spec.n {
        match spec.scheme {
            Scheme::Exact => {
                let m = model
                    .exact_moments(spec.delta, state, theta)
                    .ok_or_else(|| Error::MissingExactMoments(model.name().into()))?;
                let z: f64 = rng.sample(StandardNormal);
                state = m.mean + m.var.max(0.0).sqrt() * z;
            }
            Scheme::Euler | Scheme::Milstein => {
                for _ in 0..substeps {
                    let xp = model.project(state);
                    let z: f64 = rng.sample(StandardNormal);
                    let sigma = model.diffusion(xp, theta.beta);
                    let mut next = state + model.drift(xp, theta.alpha) * h + sigma * sqrt_h * z;
                    if spec.scheme == Scheme::Milstein {
                        let e = 1e-6 * xp.abs().max(1.0);
                        let dv = (model.diffusion_sq(xp + e, theta.beta) - model.diffusion_sq(xp - e, theta.beta))
                            / (2.0 * e);
                        next += 0.25 * dv * (z * z - 1.0) * h;
                    }
                    state = next;
                }
            }
        }
        let observed = model.project(state);
        if !(observed.is_finite() && observed >= iv.lower && observed <= iv.upper) {
            return Err(Error::PathEscaped { index: i, value: observed });
        }
        values.push(observed);
    }
    Ok(SamplePath { values, delta: spec.delta, seed: spec.seed, scheme: spec.scheme.to_string(), substeps })
}

/// `delta_n = c n^-rho` with `rho` in `(1/3, 1)`, so that `n delta_n -> inf`
/// and `n delta_n^3 -> 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingRule {
    pub c: f64,
    pub rho: f64,
}

impl Default for SamplingRule {
    fn default() -> Self {
        SamplingRule { c: 1.0, rho: 0.6 }
    }
}

impl SamplingRule {
    pub fn new(c: f64, rho: f64) -> Result<Self> {
        let rule = SamplingRule { c, rho };
        rule.validate()?;
        Ok(rule)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::InvalidConfig(format!("sampling constant c must be positive, got {}", self.c)));
        }
        if !(self.rho > 1.0 / 3.0 && self.rho < 1.0) {
            return Err(Error::InvalidConfig(format!("sampling exponent rho must lie in (1/3, 1), got {}", self.rho)));
        }
        Ok(())
    }

    pub fn delta(&self, n: usize) -> f64 {
        sampling_schedule(*self, n)
    }
}

/// `delta_n = c n^-rho`.
pub fn sampling_schedule(rule: SamplingRule, n: usize) -> f64 {
    rule.c * (n as f64).powf(-rule.rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Cir, OrnsteinUhlenbeck};
    use approx::assert_abs_diff_eq;

    const OU11: ParamPoint = ParamPoint { alpha: 1.0, beta: 1.0 };

    #[test]
    fn deterministic_paths() {
        let spec = PathSpec::new(100, 0.01, 42, Scheme::Euler);
        let a = simulate_path(&OrnsteinUhlenbeck, OU11, &spec).unwrap();
        let b = simulate_path(&OrnsteinUhlenbeck, OU11, &spec).unwrap();
        assert_eq!(a.values.len(), 101);
        assert_eq!(a, b);
        let c = simulate_path(&OrnsteinUhlenbeck, OU11, &PathSpec { seed: 43, ..spec }).unwrap();
        assert_ne!(a.values, c.values);
    }

    #[test]
    fn exact_scheme_stationary_variance() {
        let spec = PathSpec::new(200_000, 0.01, 42, Scheme::Exact);
        let p = simulate_path(&OrnsteinUhlenbeck, OU11, &spec).unwrap();
        let var = crate::stats::variance(&p.values).unwrap();
        assert!((0.475..=0.525).contains(&var), "variance {var}");
    }

    #[test]
    fn small_noise_follows_ode() {
        let spec = PathSpec::new(100, 0.01, 1, Scheme::Euler).substeps(50).x0(2.0);
        let p = simulate_path(&OrnsteinUhlenbeck, ParamPoint::new(1.0, 1e-4), &spec).unwrap();
        for (i, v) in p.values.iter().enumerate() {
            assert!((v - 2.0 * (-(i as f64) * 0.01).exp()).abs() < 1e-3);
        }
    }

    #[test]
    fn exact_scheme_only_for_gaussian_models() {
        let cir = Cir::new(1.0).unwrap();
        let spec = PathSpec::new(10, 0.1, 1, Scheme::Exact);
        assert!(matches!(
            simulate_path(&cir, ParamPoint::new(1.0, 0.5), &spec),
            Err(Error::SchemeUnavailable { .. })
        ));
    }

    #[test]
    fn cir_paths_stay_nonnegative() {
        let cir = Cir::new(0.2).unwrap();
        // Feller condition violated: 2 * 1 * 0.2 < 0.8^2
        let spec = PathSpec::new(2000, 0.01, 5, Scheme::Euler).x0(0.2);
        match simulate_path(&cir, ParamPoint::new(1.0, 0.8), &spec) {
            Ok(p) => assert!(p.values.iter().all(|v| *v >= 0.0)),
            Err(e) => panic!("{e}"),
        }
        let spec = PathSpec::new(2000, 0.01, 5, Scheme::Milstein);
        let p = simulate_path(&cir, ParamPoint::new(1.0, 0.3), &spec).unwrap();
        assert!(p.values.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn schedule_arithmetic() {
        let rule = SamplingRule::default();
        let d = rule.delta(10_000);
        assert_abs_diff_eq!(d, 0.003_981_071_705_534_973, epsilon = 1e-15);
        assert_abs_diff_eq!(10_000.0 * d.powi(3), 6.309_573_444_801_93e-4, epsilon = 1e-12);
        let mut last = 0.0;
        for n in [10, 100, 1000, 10_000, 100_000] {
            let t = n as f64 * rule.delta(n);
            assert!(t > last);
            last = t;
        }
        assert!(SamplingRule::new(1.0, 0.3).is_err());
        assert!(SamplingRule::new(1.0, 1.0).is_err());
        assert!(SamplingRule::new(0.0, 0.5).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let spec = PathSpec::new(20, 0.05, 3, Scheme::Exact);
        let p = simulate_path(&OrnsteinUhlenbeck, OU11, &spec).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("index,time,value\n"));
        let q = SamplePath::read_csv(buf.as_slice()).unwrap();
        assert_eq!(q.values, p.values);
        assert_abs_diff_eq!(q.delta, 0.05, epsilon = 1e-14);
    }

    #[test]
    fn replication_seeds_are_distinct() {
        let seeds: Vec<u64> = (0..100).map(|i| replication_seed(7, i)).collect();
        let mut sorted = seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), seeds.len());
        assert_eq!(replication_seed(7, 3), seeds[3]);
    }
}

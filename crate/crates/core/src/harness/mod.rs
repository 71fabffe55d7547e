//! Reproducible Monte Carlo experiments: replicate simulate -> solve,
//! summarize the standardized estimation errors against the limit theory,
//! and scan empirical convergence rates over a list of sample sizes.

mod summary;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estfun::{catalog, EstimatingFunction};
use crate::inference::{theoretical_asymptotics, AsymptoticsReport};
use crate::model::{Diffusion, ModelConfig, ParamPoint};
use crate::simulate::{replication_seed, simulate_path, PathSpec, SamplingRule, Scheme};
use crate::solve::{solve_estimating_equation, Bounds, SolveSettings};
use crate::stats::log_log_slope;

pub use summary::{summarize, Comparison, Summary};

/// Non-convergence fraction above which a warning is logged.
pub const WARN_FAILURE_FRACTION: f64 = 0.02;
/// Non-convergence fraction above which the experiment aborts.
pub const ABORT_FAILURE_FRACTION: f64 = 0.20;

pub const RECORDS_FILE: &str = "records.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CSV_HEADER: &str = "rep,seed,converged,alpha_hat,beta_hat,std_err_alpha_scaled,std_err_beta_scaled";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "default_tol_g")]
    pub tol_g: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_damping")]
    pub damping: f64,
    /// Defaults to the true parameter.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<ParamPoint>,
    /// Add the four +-20% perturbations of the start.
    #[serde(default = "default_true")]
    pub perturb: bool,
    #[serde(default)]
    pub bounds: Bounds,
}

fn default_tol_g() -> f64 {
    SolveSettings::default().tol_g
}

fn default_max_iter() -> usize {
    SolveSettings::default().max_iter
}

fn default_damping() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol_g: default_tol_g(),
            max_iter: default_max_iter(),
            damping: default_damping(),
            start: None,
            perturb: true,
            bounds: Bounds::default(),
        }
    }
}

impl SolverConfig {
    pub fn settings(&self, theta0: ParamPoint) -> SolveSettings {
        let start = self.start.unwrap_or(theta0);
        let base = if self.perturb { SolveSettings::from_start(start) } else { SolveSettings::single_start(start) };
        SolveSettings { tol_g: self.tol_g, max_iter: self.max_iter, damping: self.damping, bounds: self.bounds, ..base }
    }
}

/// A Monte Carlo experiment, read from a single JSON document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub theta0: ParamPoint,
    pub estimator: String,
    #[serde(default)]
    pub sampling: SamplingRule,
    /// Sample size (number of increments) of a single experiment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Sample sizes of a rate scan, strictly increasing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_list: Option<Vec<usize>>,
    pub replications: usize,
    pub master_seed: u64,
    /// Defaults to the exact scheme for Gaussian transitions, Milstein otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme: Option<Scheme>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub substeps: Option<usize>,
    #[serde(default)]
    pub solver: SolverConfig,
    /// Worker threads; never echoed, outputs do not depend on it.
    #[serde(default, skip_serializing)]
    pub workers: Option<usize>,
    #[serde(default, skip_serializing)]
    pub out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::InvalidConfig("replications must be at least 1".into()));
        }
        self.sampling.validate()?;
        if !self.theta0.is_finite() {
            return Err(Error::InvalidConfig("theta0 must be finite".into()));
        }
        if let Some(list) = &self.n_list {
            if list.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidConfig("n_list must be strictly increasing".into()));
            }
            if list.first() == Some(&0) {
                return Err(Error::InvalidConfig("sample sizes must be positive".into()));
            }
        }
        if self.n == Some(0) {
            return Err(Error::InvalidConfig("n must be positive".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::InvalidConfig("workers must be at least 1".into()));
        }
        Ok(())
    }

    fn scheme_for(&self, model: &dyn Diffusion) -> Scheme {
        self.scheme.unwrap_or(if model.gaussian_transition() { Scheme::Exact } else { Scheme::Milstein })
    }
}

/// Outcome of one replication. Standardized errors are
/// `(sqrt(n delta) (alpha_hat - alpha0), sqrt(n) (beta_hat - beta0))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub index: usize,
    pub seed: u64,
    pub converged: bool,
    pub theta_hat: Option<ParamPoint>,
    pub g_norm: Option<f64>,
    pub std_err_alpha_scaled: Option<f64>,
    pub std_err_beta_scaled: Option<f64>,
}

impl ReplicationRecord {
    fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{}",
            self.index,
            self.seed,
            self.converged,
            opt(self.theta_hat.map(|t| t.alpha)),
            opt(self.theta_hat.map(|t| t.beta)),
            opt(self.std_err_alpha_scaled),
            opt(self.std_err_beta_scaled),
        )
    }
}

pub fn records_csv(records: &[ReplicationRecord]) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

/// Empirical spread of the raw estimates at one sample size of a scan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub n: usize,
    pub delta: f64,
    pub converged: usize,
    pub sd_alpha: Option<f64>,
    pub sd_beta: Option<f64>,
}

/// Fitted slopes of `log sd` against `log n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateExponents {
    pub alpha: f64,
    pub beta: f64,
}

#[allow(non_snake_case)]
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MCReport {
    pub config: ExperimentConfig,
    pub M: usize,
    pub M_converged: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summary: Option<Summary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theory: Option<AsymptoticsReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scan: Option<Vec<ScanPoint>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate_exponents: Option<RateExponents>,
}

impl MCReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

/// Report plus the per-replication records it summarizes.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub report: MCReport,
    pub records: Vec<ReplicationRecord>,
}

impl Experiment {
    /// Writes `records.csv` and `summary.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        write_outputs(dir, &self.records, &self.report)
    }
}

fn write_outputs(dir: &Path, records: &[ReplicationRecord], report: &MCReport) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::File::create(dir.join(RECORDS_FILE))?.write_all(records_csv(records).as_bytes())?;
    fs::File::create(dir.join(SUMMARY_FILE))?.write_all(report.to_json()?.as_bytes())?;
    Ok(())
}

struct Setup {
    model: Arc<dyn Diffusion>,
    ef: Arc<dyn EstimatingFunction>,
    settings: SolveSettings,
    scheme: Scheme,
}

fn setup(config: &ExperimentConfig) -> Result<Setup> {
    config.validate()?;
    let model = config.model.build()?;
    model.validate(config.theta0)?;
    let ef = catalog(&config.estimator, model.clone())?;
    let settings = config.solver.settings(config.theta0);
    let scheme = config.scheme_for(&*model);
    Ok(Setup { model, ef, settings, scheme })
}

fn with_workers<T: Send>(workers: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(job()),
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build()
                .map_err(|e| Error::InvalidConfig(format!("cannot build worker pool: {e}")))?;
            Ok(pool.install(job))
        }
    }
}

fn replicate(setup: &Setup, config: &ExperimentConfig, n: usize, stream: u64, index: usize) -> ReplicationRecord {
    let seed = replication_seed(config.master_seed, (stream << 32) | index as u64);
    let delta = config.sampling.delta(n);
    let mut spec = PathSpec::new(n, delta, seed, setup.scheme);
    if let Some(s) = config.substeps {
        spec = spec.substeps(s);
    }
    let theta0 = config.theta0;
    let failed = |theta_hat: Option<ParamPoint>, g_norm: Option<f64>| ReplicationRecord {
        index,
        seed,
        converged: false,
        theta_hat,
        g_norm,
        std_err_alpha_scaled: None,
        std_err_beta_scaled: None,
    };
    let path = match simulate_path(&*setup.model, theta0, &spec) {
        Ok(p) => p,
        Err(e) => {
            log::warn!("replication {index}: simulation failed: {e}");
            return failed(None, None);
        }
    };
    match solve_estimating_equation(&*setup.ef, &path, &setup.settings) {
        Ok(est) => {
            let t = est.theta_hat;
            let nf = n as f64;
            ReplicationRecord {
                index,
                seed,
                converged: true,
                theta_hat: Some(t),
                g_norm: Some(est.g_norm),
                std_err_alpha_scaled: Some((nf * delta).sqrt() * (t.alpha - theta0.alpha)),
                std_err_beta_scaled: Some(nf.sqrt() * (t.beta - theta0.beta)),
            }
        }
        Err(Error::NoConvergence { best, .. }) => {
            log::debug!("replication {index}: no convergence");
            failed(best.as_ref().map(|b| b.theta_hat), best.as_ref().map(|b| b.g_norm))
        }
        Err(e) => {
            log::warn!("replication {index}: {e}");
            failed(None, None)
        }
    }
}

fn run_batch(setup: &Setup, config: &ExperimentConfig, n: usize, stream: u64) -> Result<Vec<ReplicationRecord>> {
    with_workers(config.workers, || {
        (0..config.replications)
            .into_par_iter()
            .map(|i| replicate(setup, config, n, stream, i))
            .collect::<Vec<_>>()
    })
}

fn check_failures(records: &[ReplicationRecord], n: usize) -> Result<usize> {
    let total = records.len();
    let failed = records.iter().filter(|r| !r.converged).count();
    let frac = failed as f64 / total as f64;
    if frac > ABORT_FAILURE_FRACTION {
        log::error!("n = {n}: {failed} of {total} replications failed");
        return Err(Error::TooManyFailures { failed, total });
    }
    if frac > WARN_FAILURE_FRACTION {
        log::warn!("n = {n}: {failed} of {total} replications did not converge and are excluded");
    }
    Ok(total - failed)
}

fn theory_at_truth(setup: &Setup, theta0: ParamPoint) -> Option<AsymptoticsReport> {
    match theoretical_asymptotics(&*setup.ef, &*setup.model, theta0, theta0) {
        Ok(r) => Some(r),
        Err(e) => {
            log::warn!("no theoretical comparison: {e}");
            None
        }
    }
}

/// Runs `M` replications at sample size `config.n`. Outputs are written to
/// `config.out_dir` when set; they are byte-identical for identical
/// configurations regardless of the worker count.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Experiment> {
    let n = config
        .n
        .ok_or_else(|| Error::InvalidConfig("experiment needs a sample size `n`".into()))?;
    let setup = setup(config)?;
    let records = run_batch(&setup, config, n, 0)?;
    if let Some(dir) = &config.out_dir {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(RECORDS_FILE), records_csv(&records))?;
    }
    let converged = check_failures(&records, n)?;
    let theory = theory_at_truth(&setup, config.theta0);
    let report = MCReport {
        config: config.clone(),
        M: config.replications,
        M_converged: converged,
        n: Some(n),
        delta: Some(config.sampling.delta(n)),
        summary: Some(summarize(&records, theory.as_ref())),
        theory,
        scan: None,
        rate_exponents: None,
    };
    if let Some(dir) = &config.out_dir {
        write_outputs(dir, &records, &report)?;
    }
    Ok(Experiment { report, records })
}

/// Repeats the experiment for each size in `config.n_list` and fits the
/// slopes of `log sd(alpha_hat)` and `log sd(beta_hat)` against `log n`.
pub fn rate_scan(config: &ExperimentConfig) -> Result<Experiment> {
    let list = config
        .n_list
        .clone()
        .ok_or_else(|| Error::InvalidConfig("rate scan needs `n_list`".into()))?;
    if list.len() < 4 {
        return Err(Error::InvalidConfig(format!("rate scan needs at least 4 sample sizes, got {}", list.len())));
    }
    let setup = setup(config)?;
    let mut all = Vec::with_capacity(list.len() * config.replications);
    let mut points = Vec::with_capacity(list.len());
    let mut converged_total = 0;
    for (k, &n) in list.iter().enumerate() {
        let records = run_batch(&setup, config, n, k as u64 + 1)?;
        let converged = check_failures(&records, n)?;
        converged_total += converged;
        let (a, b): (Vec<f64>, Vec<f64>) =
            records.iter().filter(|r| r.converged).filter_map(|r| r.theta_hat).map(|t| (t.alpha, t.beta)).unzip();
        points.push(ScanPoint {
            n,
            delta: config.sampling.delta(n),
            converged,
            sd_alpha: crate::stats::variance(&a).map(f64::sqrt),
            sd_beta: crate::stats::variance(&b).map(f64::sqrt),
        });
        all.extend(records);
    }
    let ns: Vec<f64> = points.iter().map(|p| p.n as f64).collect();
    let fit = |sd: Vec<Option<f64>>| -> Option<f64> {
        let sd: Option<Vec<f64>> = sd.into_iter().collect();
        sd.filter(|v| v.iter().all(|x| *x > 0.0)).map(|v| log_log_slope(&ns, &v))
    };
    let rate_exponents = match (
        fit(points.iter().map(|p| p.sd_alpha).collect()),
        fit(points.iter().map(|p| p.sd_beta).collect()),
    ) {
        (Some(alpha), Some(beta)) => Some(RateExponents { alpha, beta }),
        _ => None,
    };
    let report = MCReport {
        config: config.clone(),
        M: config.replications * list.len(),
        M_converged: converged_total,
        n: None,
        delta: None,
        summary: None,
        theory: None,
        scan: Some(points),
        rate_exponents,
    };
    if let Some(dir) = &config.out_dir {
        write_outputs(dir, &all, &report)?;
    }
    Ok(Experiment { report, records: all })
}

/// One acceptance threshold evaluated on a report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub target: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Efficiency thresholds of an `mc` run: both standardized variances
/// within `rel_tol` of the theoretical rate-optimal variances and
/// `|corr| <= max_corr`.
pub fn efficiency_checks(report: &MCReport, rel_tol: f64, max_corr: f64) -> Result<Vec<Check>> {
    let summary = report
        .summary
        .as_ref()
        .ok_or_else(|| Error::InsufficientData("report has no summary".into()))?;
    let theory = report
        .theory
        .as_ref()
        .ok_or_else(|| Error::InsufficientData("report has no theoretical covariance".into()))?;
    let need = |v: Option<f64>, what: &str| {
        v.ok_or_else(|| Error::InsufficientData(format!("{what} undefined (fewer than 2 converged replications)")))
    };
    let rel = |name: &str, value: f64, target: f64| Check {
        name: name.to_string(),
        value,
        target,
        tolerance: rel_tol,
        pass: ((value - target) / target).abs() <= rel_tol,
    };
    let corr = need(summary.correlation, "correlation")?;
    Ok(vec![
        rel("var_alpha_scaled", need(summary.var_alpha, "variance of alpha")?, theory.cov_rate_optimal[0][0]),
        rel("var_beta_scaled", need(summary.var_beta, "variance of beta")?, theory.cov_rate_optimal[1][1]),
        Check { name: "abs_correlation".into(), value: corr.abs(), target: 0.0, tolerance: max_corr, pass: corr.abs() <= max_corr },
    ])
}

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufReader, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use diffest::conditions::{
    check_efficiency, check_rate_optimality, default_grid, default_tolerance, probe_martingale_order, ProbeEngine,
    PROBE_DELTAS,
};
use diffest::estfun::catalog;
use diffest::harness::{efficiency_checks, rate_scan, run_experiment, ExperimentConfig, RECORDS_FILE, SUMMARY_FILE};
use diffest::inference::{empirical_covariance, theoretical_asymptotics, CovarianceMode};
use diffest::simulate::{simulate_path, PathSpec};
use diffest::solve::{solve_estimating_equation, SolveSettings};
use diffest::{builtin_model, Diffusion, ParamPoint, SamplePath, SamplingRule, Scheme};

#[derive(Parser)]
#[command(name = "diffest", version, about = "Estimation for ergodic diffusions observed at high frequency")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate an equidistant sample path and write it as CSV
    Simulate(SimulateArgs),
    /// Solve an estimating equation on a CSV path
    Estimate(EstimateArgs),
    /// Check rate-optimality and efficiency conditions of an estimator
    Check(CheckArgs),
    /// Limit quantities S, V, W1, W2 and the efficient bound
    Asymptotics(AsymptoticsArgs),
    /// Run a Monte Carlo experiment from a JSON config
    Mc(McArgs),
    /// Scan empirical convergence rates over a list of sample sizes
    RateScan(RunArgs),
}

#[derive(Args)]
struct ModelArgs {
    /// Builtin model: ou or cir
    #[arg(long, default_value = "ou")]
    model: String,
    /// Model constants as name=value, e.g. m0=1
    #[arg(long = "fixed", value_parser = parse_constant)]
    fixed: Vec<(String, f64)>,
}

impl ModelArgs {
    fn build(&self) -> Result<std::sync::Arc<dyn Diffusion>> {
        let fixed: BTreeMap<String, f64> = self.fixed.iter().cloned().collect();
        Ok(builtin_model(&self.model, &fixed)?)
    }
}

#[derive(Args)]
struct ThetaArgs {
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    alpha: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    beta: f64,
}

impl ThetaArgs {
    fn theta(&self) -> ParamPoint {
        ParamPoint::new(self.alpha, self.beta)
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    theta: ThetaArgs,
    /// Number of increments
    #[arg(long)]
    n: usize,
    /// Sampling step; defaults to c n^-rho
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    #[arg(long, default_value_t = 0.6)]
    rho: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// euler, milstein or exact
    #[arg(long)]
    scheme: Option<Scheme>,
    #[arg(long)]
    substeps: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    x0: Option<f64>,
    /// Output file (stdout if omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    estimator: String,
    /// CSV with columns index,time,value
    #[arg(long)]
    data: PathBuf,
    /// Starting point alpha,beta
    #[arg(long, value_parser = parse_point, allow_negative_numbers = true)]
    start: ParamPoint,
    /// Covariance estimator: auto, general or rate-optimal
    #[arg(long, default_value = "auto")]
    mode: String,
    #[arg(long)]
    no_perturb: bool,
}

#[derive(Args)]
struct CheckArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    theta: ThetaArgs,
    #[arg(long)]
    estimator: String,
    /// Also probe the martingale order at this state
    #[arg(long, allow_negative_numbers = true)]
    probe_x: Option<f64>,
    /// Residual tolerance; defaults to 1e-6 for builtin models
    #[arg(long, visible_alias = "tol")]
    tolerance: Option<f64>,
}

#[derive(Args)]
struct AsymptoticsArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    theta: ThetaArgs,
    #[arg(long)]
    estimator: String,
    /// Evaluate the limit quantities at this theta (defaults to the true value)
    #[arg(long, value_parser = parse_point, allow_negative_numbers = true)]
    at: Option<ParamPoint>,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration (JSON)
    #[arg(long)]
    config: PathBuf,
    /// Override the master seed
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct McArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Exit with status 2 when the efficiency thresholds are violated
    #[arg(long = "assert")]
    assert_thresholds: bool,
    /// Relative tolerance on the standardized variances
    #[arg(long, default_value_t = 0.15)]
    rel_tol: f64,
    #[arg(long, default_value_t = 0.15)]
    max_corr: f64,
}

fn parse_constant(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected name=value, got `{s}`"))?;
    let v: f64 = v.trim().parse().map_err(|e| format!("bad value in `{s}`: {e}"))?;
    Ok((k.trim().to_string(), v))
}

fn parse_point(s: &str) -> Result<ParamPoint, String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected alpha,beta, got `{s}`"))?;
    let parse = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("bad number `{t}`: {e}"));
    Ok(ParamPoint::new(parse(a)?, parse(b)?))
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let model = args.model.build()?;
    let delta = match args.delta {
        Some(d) => d,
        None => SamplingRule::new(args.c, args.rho)?.delta(args.n),
    };
    let scheme = args
        .scheme
        .unwrap_or(if model.gaussian_transition() { Scheme::Exact } else { Scheme::Milstein });
    let mut spec = PathSpec::new(args.n, delta, args.seed, scheme);
    if let Some(s) = args.substeps {
        spec = spec.substeps(s);
    }
    if let Some(x0) = args.x0 {
        spec = spec.x0(x0);
    }
    let path = simulate_path(&*model, args.theta.theta(), &spec)?;
    match args.out {
        Some(p) => path.write_csv(File::create(&p).with_context(|| format!("creating {}", p.display()))?)?,
        None => path.write_csv(io::stdout().lock())?,
    }
    Ok(())
}

fn estimate(args: EstimateArgs) -> Result<()> {
    let model = args.model.build()?;
    let ef = catalog(&args.estimator, model.clone())?;
    let file = File::open(&args.data).with_context(|| format!("opening {}", args.data.display()))?;
    let path = SamplePath::read_csv(BufReader::new(file))?;
    let settings = if args.no_perturb {
        SolveSettings::single_start(args.start)
    } else {
        SolveSettings::from_start(args.start)
    };
    let est = solve_estimating_equation(&*ef, &path, &settings)?;
    let mode = match args.mode.as_str() {
        "auto" => {
            let grid = default_grid(&*model, est.theta_hat)?;
            let reports = check_rate_optimality(&*ef, &*model, est.theta_hat, &grid, default_tolerance(&*model))?;
            if reports[0].pass {
                CovarianceMode::RateOptimal
            } else {
                CovarianceMode::General
            }
        }
        other => other.parse()?,
    };
    let cov = empirical_covariance(&*ef, &path, est.theta_hat, mode)?;
    let (se_alpha, se_beta) = cov.standard_errors(path.n(), path.delta);
    print_json(&json!({
        "theta_hat": est.theta_hat,
        "g_norm": est.g_norm,
        "converged": est.converged,
        "iterations": est.iterations,
        "start_used": est.start_used,
        "se_alpha": se_alpha,
        "se_beta": se_beta,
        "covariance": cov,
    }))
}

fn check(args: CheckArgs) -> Result<()> {
    let model = args.model.build()?;
    let theta = args.theta.theta();
    let ef = catalog(&args.estimator, model.clone())?;
    let grid = default_grid(&*model, theta)?;
    let tol = args.tolerance.unwrap_or_else(|| default_tolerance(&*model));
    let rate = check_rate_optimality(&*ef, &*model, theta, &grid, tol)?;
    let eff = check_efficiency(&*ef, &*model, theta, &grid, tol)?;
    for r in rate.iter().chain(eff.iter()) {
        eprintln!("{:<22} {:<5} {}", r.condition.to_string(), if r.pass { "pass" } else { "FAIL" }, r.summary);
    }
    let probe = match args.probe_x {
        Some(x) => {
            let engine = if model.gaussian_transition() { ProbeEngine::Exact } else { ProbeEngine::monte_carlo(0) };
            Some(probe_martingale_order(&*ef, &*model, theta, x, &PROBE_DELTAS, engine)?)
        }
        None => None,
    };
    print_json(&json!({
        "estimator": args.estimator,
        "model": model.name(),
        "theta": theta,
        "rate_optimality": rate,
        "efficiency": eff,
        "order_probe": probe,
    }))
}

fn asymptotics(args: AsymptoticsArgs) -> Result<()> {
    let model = args.model.build()?;
    let theta0 = args.theta.theta();
    let ef = catalog(&args.estimator, model.clone())?;
    let report = theoretical_asymptotics(&*ef, &*model, args.at.unwrap_or(theta0), theta0)?;
    print_json(&report)
}

fn load_config(run: &RunArgs) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::load(&run.config).with_context(|| format!("reading {}", run.config.display()))?;
    if let Some(seed) = run.seed {
        config.master_seed = seed;
    }
    if run.out_dir.is_some() {
        config.out_dir = run.out_dir.clone();
    }
    if run.workers.is_some() {
        config.workers = run.workers;
    }
    Ok(config)
}

fn report_outputs(config: &ExperimentConfig) {
    if let Some(dir) = &config.out_dir {
        eprintln!("wrote {} and {}", dir.join(RECORDS_FILE).display(), dir.join(SUMMARY_FILE).display());
    }
}

fn mc(args: McArgs) -> Result<ExitCode> {
    let config = load_config(&args.run)?;
    let experiment = run_experiment(&config)?;
    report_outputs(&config);
    if config.out_dir.is_none() {
        print!("{}", experiment.report.to_json()?);
    }
    if args.assert_thresholds {
        let checks = efficiency_checks(&experiment.report, args.rel_tol, args.max_corr)?;
        let mut ok = true;
        for c in &checks {
            eprintln!(
                "{} {:<18} value {:.4} target {:.4} tolerance {}",
                if c.pass { "PASS" } else { "FAIL" },
                c.name,
                c.value,
                c.target,
                c.tolerance
            );
            ok &= c.pass;
        }
        if !ok {
            return Ok(ExitCode::from(2));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn scan(args: RunArgs) -> Result<()> {
    let config = load_config(&args)?;
    if config.n_list.is_none() {
        bail!("rate-scan needs `n_list` in the config");
    }
    let experiment = rate_scan(&config)?;
    report_outputs(&config);
    if config.out_dir.is_none() {
        print!("{}", experiment.report.to_json()?);
    }
    if let Some(r) = &experiment.report.rate_exponents {
        eprintln!("slope of sd(alpha_hat): {:.3}; slope of sd(beta_hat): {:.3}", r.alpha, r.beta);
    }
    Ok(())
}

fn main() -> Result<ExitCode> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate(a) => simulate(a)?,
        Command::Estimate(a) => estimate(a)?,
        Command::Check(a) => check(a)?,
        Command::Asymptotics(a) => asymptotics(a)?,
        Command::Mc(a) => return mc(a),
        Command::RateScan(a) => scan(a)?,
    }
    Ok(ExitCode::SUCCESS)
}

//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.

use std::fs;
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use diffest::conditions::{
    check_efficiency, check_rate_optimality, default_grid, probe_martingale_order, verify_lemma1, FittedOrder,
    ProbeEngine, PROBE_DELTAS,
};
use diffest::estfun::{
    catalog, constant_weight_quadratic_ef, efficient_weights, eval_g_values, gh_optimal_general, quadratic_ef, Basis,
    EstimatingFunction, QuadraticWeights, ScalarWeight, WeightMatrix,
};
use diffest::harness::{rate_scan, run_experiment, ExperimentConfig};
use diffest::inference::{efficient_bound, theoretical_asymptotics};
use diffest::model::{Cir, OrnsteinUhlenbeck};
use diffest::moments::MomentEngine;
use diffest::solve::{solve_alpha, SolveSettings};
use diffest::stats::log_log_slope;
use diffest::{Diffusion, ParamPoint};

const OU11: ParamPoint = ParamPoint { alpha: 1.0, beta: 1.0 };

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn ou() -> Arc<dyn Diffusion> {
    Arc::new(OrnsteinUhlenbeck)
}

fn within(value: f64, target: f64, tol: f64) -> bool {
    (value - target).abs() <= tol
}

fn efficiency() -> anyhow::Result<Outcome> {
    let config = ExperimentConfig::from_json(
        r#"{"model": {"name": "ou"}, "theta0": {"alpha": 1.0, "beta": 1.0},
            "estimator": "quad-exact-efficient", "sampling": {"c": 1.0, "rho": 0.6},
            "n": 20000, "replications": 500, "master_seed": 20240601,
            "solver": {"perturb": false}}"#,
    )?;
    let e = run_experiment(&config)?;
    let s = e.report.summary.expect("summary");
    let (va, vb, corr) = (s.var_alpha.unwrap_or(f64::NAN), s.var_beta.unwrap_or(f64::NAN), s.correlation.unwrap_or(f64::NAN));
    let pass = within(va, 2.0, 0.15 * 2.0) && within(vb, 0.5, 0.15 * 0.5) && corr.abs() <= 0.15;
    Ok(outcome(
        pass,
        format!(
            "Var(alpha) {va:.4} (2 +- 15%), Var(beta) {vb:.4} (0.5 +- 15%), |corr| {:.4} <= 0.15, converged {}/500; \
             skewness ({:.3}, {:.3}), excess kurtosis ({:.3}, {:.3})",
            corr.abs(),
            s.converged,
            s.skewness_alpha.unwrap_or(f64::NAN),
            s.skewness_beta.unwrap_or(f64::NAN),
            s.excess_kurtosis_alpha.unwrap_or(f64::NAN),
            s.excess_kurtosis_beta.unwrap_or(f64::NAN),
        ),
    ))
}

fn rate_contrast() -> anyhow::Result<Outcome> {
    let scan = |estimator: &str| -> anyhow::Result<(f64, f64)> {
        let config = ExperimentConfig::from_json(&format!(
            r#"{{"model": {{"name": "ou"}}, "theta0": {{"alpha": 1.0, "beta": 1.0}},
                "estimator": "{estimator}", "sampling": {{"c": 4.0, "rho": 0.6}},
                "n_list": [4000, 8000, 16000, 32000], "replications": 300, "master_seed": 7,
                "solver": {{"perturb": false}}}}"#
        ))?;
        let r = rate_scan(&config)?.report.rate_exponents.expect("rate exponents");
        Ok((r.alpha, r.beta))
    };
    let (ea, eb) = scan("quad-exact-efficient")?;
    let (na, nb) = scan("non-rate-identifiable")?;
    let pass = within(eb, -0.5, 0.1) && within(nb, -0.2, 0.1);
    Ok(outcome(
        pass,
        format!(
            "beta slope efficient {eb:.3} (-0.5 +- 0.1), non-rate control {nb:.3} (-0.2 +- 0.1); \
             alpha slopes {ea:.3}, {na:.3}"
        ),
    ))
}

fn condition_checkers() -> anyhow::Result<Outcome> {
    let model = ou();
    let grid = default_grid(&*model, OU11)?;
    let tol = 1e-6;
    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    for name in ["quad-exact-efficient", "euler", "gh-quadratic", "gh-general", "local-gaussian"] {
        let ef = catalog(name, model.clone())?;
        for r in check_rate_optimality(&*ef, &*model, OU11, &grid, tol)?
            .into_iter()
            .chain(check_efficiency(&*ef, &*model, OU11, &grid, tol)?)
        {
            worst = worst.max(r.max_residual);
            if !r.pass {
                failures.push(format!("{name}/{}", r.condition));
            }
        }
    }
    let control = catalog("non-rate-control", model.clone())?;
    let [jacobsen, _] = check_rate_optimality(&*control, &*model, OU11, &[2.0], tol)?;
    let constant = constant_weight_quadratic_ef(model.clone(), 1.0, 1.0)?;
    let [drift, _] = check_efficiency(&constant, &*model, OU11, &[2.0], tol)?;
    let pass = failures.is_empty()
        && !jacobsen.pass
        && within(jacobsen.max_residual, 4.0, 1e-4)
        && !drift.pass
        && within(drift.max_residual, 3.0, 1e-4);
    Ok(outcome(
        pass,
        format!(
            "catalog max residual {worst:.2e} < 1e-6 on {} points{}; non-rate control {:.6} (4.0), constant weight {:.6} (3.0)",
            grid.len(),
            if failures.is_empty() { String::new() } else { format!(", failing: {}", failures.join(" ")) },
            jacobsen.max_residual,
            drift.max_residual,
        ),
    ))
}

fn weight_convergence() -> anyhow::Result<Outcome> {
    let model = ou();
    let basis = Basis::monomials(&[1, 2]);
    let gh = gh_optimal_general(model.clone(), basis.clone(), MomentEngine::Exact)?;
    let eff = efficient_weights(model.clone(), basis, None)?;
    let deltas = [0.2, 0.1, 0.05, 0.025];
    let mut slopes = Vec::new();
    let mut limit_err = 0.0f64;
    for x in [-1.0, 0.5, 2.0] {
        let b0 = gh.weights(x, 0.0, OU11)?;
        let dist: Vec<f64> = deltas
            .iter()
            .map(|&d| gh.weights(x, d, OU11).map(|b| (b - &b0).norm()))
            .collect::<Result<_, _>>()?;
        slopes.push(log_log_slope(&deltas, &dist));
        // B(x, 0) M(x) must equal [[d_alpha b / v, c], [0, d_beta v / v^2]] for some c
        let m = eff.basis_matrix(x)?;
        let target = eff.weights(x, 0.0, OU11)? * &m;
        let got = &b0 * &m;
        for (i, j) in [(0, 0), (1, 0), (1, 1)] {
            limit_err = limit_err.max((got[(i, j)] - target[(i, j)]).abs());
        }
    }
    let pass = slopes.iter().all(|s| within(*s, 1.0, 0.3)) && limit_err < 1e-6;
    Ok(outcome(
        pass,
        format!(
            "slopes {:.3} {:.3} {:.3} (1 +- 0.3), limit deviation {limit_err:.2e} < 1e-6",
            slopes[0], slopes[1], slopes[2]
        ),
    ))
}

fn martingale_order() -> anyhow::Result<Outcome> {
    let model = ou();
    let probe = |ef: &dyn EstimatingFunction| probe_martingale_order(ef, &*model, OU11, 2.0, &PROBE_DELTAS, ProbeEngine::Exact);
    let euler = probe(&*catalog("euler", model.clone())?)?;
    let k3 = probe(&*catalog("quad-expansion-k3", model.clone())?)?;
    let exact = probe(&*catalog("quad-exact-efficient", model.clone())?)?;
    let slopes_near = |p: &[FittedOrder; 2], k: f64| p.iter().all(|o| o.slope().is_some_and(|s| within(s, k, 0.3)));
    let pass = slopes_near(&euler.orders, 2.0) && slopes_near(&k3.orders, 3.0) && exact.orders == [FittedOrder::Exact; 2];
    Ok(outcome(
        pass,
        format!(
            "euler ({}, {}), expansion k=3 ({}, {}), exact ({}, {})",
            euler.orders[0], euler.orders[1], k3.orders[0], k3.orders[1], exact.orders[0], exact.orders[1]
        ),
    ))
}

fn solver_oracle() -> anyhow::Result<Outcome> {
    let values = [1.0, 0.8, 0.9];
    let expected = -(1.52f64 / 1.64).ln() / 0.5;
    let weights = QuadraticWeights::Diagonal(ScalarWeight::new(|x, _, _| x), ScalarWeight::constant(0.0));
    let ef = quadratic_ef(ou(), weights, MomentEngine::Exact)?;
    let g = |a: f64| eval_g_values(&ef, &values, 0.5, ParamPoint::new(a, 1.0)).map(|g| g[0]);
    let est = solve_alpha(&ef, &values, 0.5, 1.0, 1.0, &SolveSettings::default())?;
    let err = (est.theta_hat.alpha - expected).abs();
    Ok(outcome(
        err < 1e-8 && est.converged,
        format!(
            "alpha_hat {:.12} vs closed form {expected:.12}, error {err:.2e} < 1e-8, G(alpha_hat) = {:.1e}",
            est.theta_hat.alpha,
            g(est.theta_hat.alpha)?
        ),
    ))
}

fn quadrature_oracle() -> anyhow::Result<Outcome> {
    let model = ou();
    let ef = catalog("quad-exact-efficient", model.clone())?;
    let r = theoretical_asymptotics(&*ef, &*model, OU11, OU11)?;
    let sigma = efficient_bound(&*model, OU11)?;
    // Gaussian closed forms: int x^2 mu = 1/2 for OU(1, 1)
    let checks = [
        (sigma[0][0], 2.0),
        (sigma[1][1], 0.5),
        (r.S[0][0], 0.5),
        (r.S[1][1], 2.0),
        (r.W1, 0.5),
        (r.W2, 2.0),
    ];
    let quad_err = checks.iter().fold(0.0f64, |m, (v, t)| m.max((v - t).abs()));
    let mut lemma = 0.0f64;
    let cir: Arc<dyn Diffusion> = Arc::new(Cir::new(1.0)?);
    for (m, theta) in [(model.clone(), OU11), (cir, ParamPoint::new(1.0, 0.5))] {
        let grid = default_grid(&*m, theta)?;
        for name in ["quad-exact-efficient", "euler", "gh-quadratic", "local-gaussian"] {
            let ef = catalog(name, m.clone())?;
            let rep = verify_lemma1(&*ef, &*m, theta, &grid, 1)?;
            lemma = rep.max_residual.iter().fold(lemma, |a, b| a.max(*b));
        }
    }
    Ok(outcome(
        quad_err < 1e-6 && lemma < 1e-6,
        format!("max deviation from closed forms {quad_err:.2e} < 1e-6; diagonal identities (k = 0, 1) max residual {lemma:.2e} < 1e-6"),
    ))
}

fn reproducibility() -> anyhow::Result<Outcome> {
    let dir = tempfile::tempdir()?;
    let config = dir.path().join("config.json");
    fs::write(
        &config,
        r#"{"model": {"name": "ou"}, "theta0": {"alpha": 1.0, "beta": 1.0},
            "estimator": "euler", "n": 2000, "replications": 24, "master_seed": 99}"#,
    )?;
    let mut outputs = Vec::new();
    for workers in ["1", "4", "1"] {
        let out = dir.path().join(format!("out{}", outputs.len()));
        let status = Command::new(env!("CARGO_BIN_EXE_diffest"))
            .args(["mc", "--config"])
            .arg(&config)
            .arg("--out-dir")
            .arg(&out)
            .args(["--workers", workers])
            .status()?;
        anyhow::ensure!(status.success(), "mc exited with {status}");
        outputs.push((fs::read(out.join("records.csv"))?, fs::read(out.join("summary.json"))?));
    }
    let same = outputs.windows(2).all(|w| w[0] == w[1]);
    Ok(outcome(same, format!("3 runs (workers 1, 4, 1): CSV and JSON byte-identical = {same}")))
}

fn main() {
    let criteria: [(&str, fn() -> anyhow::Result<Outcome>); 8] = [
        ("efficiency of the quadratic efficient estimator", efficiency),
        ("rate contrast", rate_contrast),
        ("condition checkers", condition_checkers),
        ("weight convergence to the small-delta limit", weight_convergence),
        ("martingale-order probe", martingale_order),
        ("solver oracle", solver_oracle),
        ("quadrature oracle", quadrature_oracle),
        ("reproducibility", reproducibility),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = run().unwrap_or_else(|e| outcome(false, format!("error: {e:#}")));
        failed += usize::from(!result.pass);
        println!(
            "{} criterion {} ({name}): {} [{:.1}s]",
            if result.pass { "PASS" } else { "FAIL" },
            i + 1,
            result.detail,
            start.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
}

use std::sync::Arc;

use proptest::prelude::*;

use diffest::estfun::{catalog, eval_g_values, CATALOG};
use diffest::model::{Cir, OrnsteinUhlenbeck};
use diffest::simulate::{replication_seed, simulate_path, PathSpec};
use diffest::solve::{normalization, solve_values, SolveSettings};
use diffest::{Diffusion, ParamPoint, Scheme};

fn ou() -> Arc<dyn Diffusion> {
    Arc::new(OrnsteinUhlenbeck)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn catalog_vanishes_on_the_diagonal_at_zero_step(
        idx in 0..CATALOG.len(),
        x in -2.0f64..2.0,
        alpha in 0.3f64..3.0,
        beta in 0.3f64..2.0,
    ) {
        let ef = catalog(CATALOG[idx], ou()).unwrap();
        let g = ef.eval(0.0, x, x, ParamPoint::new(alpha, beta)).unwrap();
        prop_assert!(g.norm() < 1e-9, "{} at x = {x}: {g:?}", CATALOG[idx]);
    }

    #[test]
    fn cir_catalog_vanishes_on_the_diagonal_at_zero_step(
        idx in 0..CATALOG.len(),
        x in 0.2f64..3.0,
        alpha in 0.5f64..2.0,
        beta in 0.2f64..0.8,
    ) {
        let model: Arc<dyn Diffusion> = Arc::new(Cir::new(1.0).unwrap());
        let ef = catalog(CATALOG[idx], model).unwrap();
        let g = ef.eval(0.0, x, x, ParamPoint::new(alpha, beta)).unwrap();
        prop_assert!(g.norm() < 1e-9, "{} at x = {x}: {g:?}", CATALOG[idx]);
    }

    #[test]
    fn simulation_is_a_function_of_the_seed(seed in any::<u64>(), n in 2usize..200) {
        let spec = PathSpec::new(n, 0.01, seed, Scheme::Exact).x0(0.3);
        let a = simulate_path(&*ou(), ParamPoint::new(1.0, 1.0), &spec).unwrap();
        let b = simulate_path(&*ou(), ParamPoint::new(1.0, 1.0), &spec).unwrap();
        prop_assert_eq!(a.values.len(), n + 1);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn replication_seeds_do_not_collide(master in any::<u64>(), i in 0u64..1_000_000, j in 0u64..1_000_000) {
        prop_assume!(i != j);
        prop_assert_ne!(replication_seed(master, i), replication_seed(master, j));
    }

    #[test]
    fn normalization_matches_the_rate_matrix(n in 10usize..1_000_000, delta in 1e-5f64..0.5) {
        let d = normalization(n, delta);
        let nf = n as f64;
        prop_assert!((d[0] * (nf * delta).sqrt() - 1.0).abs() < 1e-12);
        prop_assert!((d[1] * delta * nf.sqrt() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn estimating_equation_is_solved_at_the_reported_root(seed in 0u64..1000) {
        let spec = PathSpec::new(400, 0.02, seed, Scheme::Exact);
        let path = simulate_path(&*ou(), ParamPoint::new(1.0, 1.0), &spec).unwrap();
        let ef = catalog("quad-exact-efficient", ou()).unwrap();
        let settings = SolveSettings::single_start(ParamPoint::new(1.0, 1.0));
        let est = solve_values(&*ef, &path.values, path.delta, &settings).unwrap();
        let g = eval_g_values(&*ef, &path.values, path.delta, est.theta_hat).unwrap();
        let d = normalization(path.n(), path.delta);
        prop_assert!((g[0] * d[0]).abs() <= 1e-8 && (g[1] * d[1]).abs() <= 1e-8, "{g:?}");
    }
}

mod common;

use mnir::corpus::SparseCounts;
use mnir::model::{EtaCache, FactorMatrix, MnirParams, Observations, PenaltyForm, PriorSpec};
use mnir::solver::{
    self, grad_curv, gl_bound_objective, penalty, penalty_weight, update_gl, Coordinate,
    SolverConfig,
};
use proptest::prelude::*;

fn report(name: &str, r: Result<String, String>) {
    match r {
        Ok(msg) => eprintln!("{name}: {msg}"),
        Err(msg) => panic!("{name}: {msg}"),
    }
}

#[test]
fn bound_dominates_likelihood() {
    report("bound", common::check_bound_validity(100, 11));
}

#[test]
fn objective_never_increases() {
    report("monotone", common::check_monotone_objective(100, 12));
}

#[test]
fn update_gl_matches_grid_search() {
    report("update_gl", common::check_update_gl_grid(1000, 100_000, 13));
}

#[test]
fn update_normal_matches_grid_search() {
    report("update_normal", common::check_update_normal_grid(1000, 100_000, 14));
}

#[test]
fn curvature_bound_covers_trust_region() {
    report("curvature", common::check_curvature_bound(100, 15));
}

#[test]
fn kkt_certifies_converged_fits() {
    report("kkt", common::check_kkt(20, 16));
}

#[test]
fn gamma_lasso_thresholds_then_tracks_mle() {
    report("path", common::check_thresholding_path());
}

#[test]
fn gradient_of_hand_example() {
    // Two documents, two tokens, all parameters zero: q = 1/2 everywhere.
    let counts = SparseCounts::from_triplets(2, 2, [(0, 0, 3), (0, 1, 1), (1, 1, 2)]).unwrap();
    let f = FactorMatrix::from_column(vec![1.0, -1.0]).unwrap();
    let obs = Observations::from_documents(&counts, &f).unwrap();
    let params = MnirParams::zeros(2, 1);
    let cache = EtaCache::new(&params, &obs).unwrap();
    let (g, h) = grad_curv(Coordinate::Loading { token: 0, factor: 0 }, &obs, &cache);
    // g = -sum v (x - m q) = -(1 (3 - 2) - (0 - 1)) = -2
    assert!((g + 2.0).abs() < 1e-15, "{g}");
    // h = sum v^2 m q (1 - q) = 4/4 + 2/4
    assert!((h - 1.5).abs() < 1e-15, "{h}");
}

#[test]
fn penalty_examples() {
    let prior = PriorSpec::gamma_lasso(1.0, 0.5);
    assert!((penalty(0.5, &prior) - 2f64.ln()).abs() < 1e-15);
    assert_eq!(penalty(0.0, &prior), 0.0);
    assert!((penalty_weight(0.0, &prior) - 2.0).abs() < 1e-15);
    assert!((penalty_weight(-1.5, &prior) - 0.5).abs() < 1e-15);
    let lasso = PriorSpec {
        penalty: PenaltyForm::Lasso,
        ..prior.clone()
    };
    assert!((penalty(-3.0, &lasso) - 6.0).abs() < 1e-15);
    assert_eq!(penalty_weight(7.0, &lasso), 2.0);
}

#[test]
fn no_signal_keeps_loadings_at_zero() {
    // Token shares identical in every document.
    let n = 30;
    let triplets: Vec<(usize, usize, u32)> =
        (0..n).flat_map(|i| [(i, 0, 4), (i, 1, 2), (i, 2, 2)]).collect();
    let counts = SparseCounts::from_triplets(n, 3, triplets).unwrap();
    let f = FactorMatrix::from_column((0..n).map(|i| i as f64).collect()).unwrap();
    let fit = solver::fit(&counts, &f, &SolverConfig::default()).unwrap();
    assert!(fit.converged);
    assert!(fit.params.phi.iter().all(|&p| p == 0.0), "{:?}", fit.params.phi);
}

#[test]
fn reported_lambda_is_shape_over_rate_plus_loading() {
    let mut rng = common::rng(21);
    let pr = common::random_problem(&mut rng, 40, 6, 2);
    let cfg = SolverConfig {
        prior: PriorSpec::gamma_lasso(0.7, 0.3),
        ..Default::default()
    };
    let fit = solver::fit(&pr.counts, &pr.factors, &cfg).unwrap();
    for (l, phi) in fit.lambda.iter().zip(&fit.params.phi) {
        assert!((l - 0.7 / (0.3 + phi.abs())).abs() < 1e-14);
    }
}

proptest! {
    #![proptest_config(common::proptest_config(256))]

    #[test]
    fn update_gl_tends_to_newton_step_as_shape_vanishes(
        g in -5.0f64..5.0, h in 0.5f64..5.0, phi in 0.5f64..3.0,
    ) {
        // Choose a trust region wide enough to hold the unpenalised step
        // without crossing zero.
        let target = phi - g / h;
        prop_assume!(target > 0.2);
        let delta = (target - phi).abs() + 1.0;
        let x = update_gl(g, h, phi, 1e-12, 1.0, delta);
        prop_assert!((x - target).abs() < 1e-9, "{x} vs {target}");
    }

    #[test]
    fn update_gl_never_worse_than_staying(
        g in -20.0f64..20.0, h in 0.01f64..50.0, phi in -3.0f64..3.0,
        s in 0.01f64..5.0, r in 0.05f64..2.0, delta in 0.01f64..3.0,
    ) {
        let x = update_gl(g, h, phi, s, r, delta);
        prop_assert!(
            gl_bound_objective(x, g, h, phi, s, r) <= gl_bound_objective(phi, g, h, phi, s, r) + 1e-12
        );
        prop_assert!((x - phi).abs() <= delta * (1.0 + 1e-12));
    }
}

mod common;

use qbsde::condexp::RegressionBasis;
use qbsde::paths::{make_grid, simulate_brownian, PathEnsemble};
use qbsde::scalarq::*;

fn ensemble(steps: usize, paths: usize, seed: u64) -> PathEnsemble {
    simulate_brownian(make_grid(0.0, 1.0, steps).unwrap(), paths, 1, seed).unwrap()
}

fn terminal(e: &PathEnsemble, f: impl Fn(f64) -> f64) -> Vec<f64> {
    (0..e.n_paths()).map(|p| f(e.w(e.steps(), p)[0])).collect()
}

#[test]
fn quadrature_oracle_values() {
    // 30-digit adaptive quadrature
    let cos = common::normal_expectation(|x| x.cos().exp()).ln();
    let tanh = common::normal_expectation(|x| x.tanh().exp()).ln();
    assert!((cos - 0.687569555055507080).abs() < 1e-13);
    // tanh has complex poles near the real axis; Gauss-Hermite converges slowly
    assert!((tanh - 0.188926058970568973).abs() < 1e-6);
}

#[test]
fn pure_quadratic_matches_cole_hopf() {
    let e = ensemble(200, 100_000, 11);
    let xi = terminal(&e, f64::cos);
    let basis = RegressionBasis::polynomial(4);
    let gen = ScalarGenerator::pure_quadratic(1, 1.0);
    let driver = DriverField::zeros(&e);
    let sol = solve_scalar(&e, &gen, &driver, &xi, &basis, &ScalarOptions::default()).unwrap();
    let ch = cole_hopf_solve(&e, 1.0, &driver, &xi, &basis).unwrap();
    let rel = (sol.y0() - ch.y0()).abs() / ch.y0().abs();
    assert!(rel <= 0.02, "solver {} vs Cole-Hopf {}", sol.y0(), ch.y0());

    let exact = common::normal_expectation(|x| x.cos().exp()).ln();
    assert!((ch.y0() - exact).abs() <= 3.0 * ch.y0_se(), "{} vs {exact}", ch.y0());
}

#[test]
fn cole_hopf_tanh_terminal() {
    let e = ensemble(10, 50_000, 3);
    let xi = terminal(&e, f64::tanh);
    let ch = cole_hopf_solve(&e, 1.0, &DriverField::zeros(&e), &xi, &RegressionBasis::default()).unwrap();
    let exact = common::normal_expectation(|x| x.tanh().exp()).ln();
    assert!((ch.y0() - exact).abs() <= 3.0 * ch.y0_se());
}

#[test]
fn cole_hopf_constant_terminal() {
    let e = ensemble(10, 500, 3);
    let ch = cole_hopf_solve(&e, 2.0, &DriverField::zeros(&e), &vec![-0.4; 500], &RegressionBasis::default()).unwrap();
    assert!(ch.y.data().iter().all(|v| (v + 0.4).abs() < 1e-12));
}

#[test]
fn cole_hopf_overflow_names_exponent() {
    let e = ensemble(5, 100, 3);
    match cole_hopf_solve(&e, 1.0, &DriverField::zeros(&e), &vec![800.0; 100], &RegressionBasis::default()) {
        Err(qbsde::Error::Overflow { exponent, .. }) => assert!(exponent >= 800.0),
        other => panic!("{other:?}"),
    }
}

#[test]
fn a_priori_bound_on_pure_quadratic() {
    let e = ensemble(50, 20_000, 5);
    let xi = terminal(&e, f64::cos);
    let basis = RegressionBasis::bins(16);
    let driver = DriverField::constant(&e, 0.2);
    let sol = solve_scalar(&e, &ScalarGenerator::pure_quadratic(1, 1.0), &driver, &xi, &basis, &ScalarOptions::default())
        .unwrap();
    let report = a_priori_check(&sol.y, &driver, &xi, 1.0, &e, &basis).unwrap();
    assert!(report.holds, "{report:?}");
}

#[test]
fn comparison_terminal_shift() {
    let e = ensemble(50, 20_000, 6);
    let basis = RegressionBasis::polynomial(3);
    let gen = ScalarGenerator::pure_quadratic(1, 1.0);
    let driver = DriverField::zeros(&e);
    let xi = terminal(&e, f64::sin);
    let xi_hi: Vec<f64> = xi.iter().map(|v| v + 0.5).collect();
    check_ordering(&gen, &gen, &xi, &xi_hi, 1.0).unwrap();
    let lo = solve_scalar(&e, &gen, &driver, &xi, &basis, &ScalarOptions::default()).unwrap();
    let hi = solve_scalar(&e, &gen, &driver, &xi_hi, &basis, &ScalarOptions::default()).unwrap();
    let report = comparison_check(&lo, &hi).unwrap();
    assert!(report.holds);
    assert!(report.min_gap >= 0.5 - report.max_tol, "{report:?}");

    let same = comparison_check(&lo, &lo).unwrap();
    assert_eq!(same.min_gap, 0.0);
}

#[test]
fn comparison_generator_shift() {
    let e = ensemble(40, 10_000, 7);
    let basis = RegressionBasis::polynomial(3);
    let gen = ScalarGenerator::pure_quadratic(1, 1.0);
    let up = gen.shifted(1.0);
    let driver = DriverField::zeros(&e);
    let xi = terminal(&e, |w| (2.0 * w).cos());
    check_ordering(&gen, &up, &xi, &xi, 1.0).unwrap();
    assert!(check_ordering(&up, &gen, &xi, &xi, 1.0).is_err());
    // same cap on both sides so the shift is exact
    let opts = ScalarOptions {
        z_cap: ZCap::Fixed(50.0),
        ..Default::default()
    };
    let lo = solve_scalar(&e, &gen, &driver, &xi, &basis, &opts).unwrap();
    let hi = solve_scalar(&e, &up, &driver, &xi, &basis, &opts).unwrap();
    assert!(comparison_check(&lo, &hi).unwrap().holds);
    for k in 0..=40 {
        let expect = 1.0 - e.grid().time(k);
        let gap = hi.y.mean(k, 0) - lo.y.mean(k, 0);
        assert!((gap - expect).abs() < 1e-9, "node {k}: {gap} vs {expect}");
    }
}

mod common;

use proptest::prelude::*;
use qbsde::bmo::*;
use qbsde::condexp::RegressionBasis;
use qbsde::constants::{capital_phi, find_p_for_threshold, HolderExponent};
use qbsde::paths::{make_grid, simulate_brownian, PathEnsemble};

fn ensemble(steps: usize, paths: usize, seed: u64) -> PathEnsemble {
    simulate_brownian(make_grid(0.0, 1.0, steps).unwrap(), paths, 1, seed).unwrap()
}

#[test]
fn indicator_in_time_norm() {
    let e = ensemble(40, 1000, 1);
    let m = IntegrandField::from_fn(&e, 1, |v, out| out[0] = if v.time() < 0.5 - 1e-9 { 0.6 } else { 0.0 }).unwrap();
    let est = bmo2_norm(&e, &m, &RegressionBasis::default()).unwrap();
    assert!((est.norm_sq - 0.18).abs() < 1e-12);
    assert_eq!(est.per_node_ess_sup.len(), 40);
    assert_eq!(est.norm_sq, est.per_node_ess_sup.iter().copied().fold(0.0, f64::max));
}

#[test]
fn exponential_martingale_moments() {
    let e = ensemble(20, 100_000, 2);
    let c = 0.8;
    let m = IntegrandField::constant(&e, &[c]).unwrap();
    let v = stochastic_exponential(&e, &m, 0, 20).unwrap();
    let (mean, se) = common::mean_and_se(&v);
    assert!((mean - 1.0).abs() <= 5.0 * se, "{mean} +- {se}");
    let logs = log_stochastic_exponential(&e, &m, 0, 20).unwrap();
    let (lm, lse) = common::mean_and_se(&logs);
    assert!((lm + 0.5 * c * c).abs() <= 5.0 * lse);
}

#[test]
fn john_nirenberg_constant_is_exact() {
    let e = ensemble(20, 500, 3);
    for c in [0.1, 0.5, 0.9] {
        let m = IntegrandField::constant(&e, &[c]).unwrap();
        let r = john_nirenberg_check(&e, &m, &RegressionBasis::default()).unwrap();
        assert!(r.applicable && r.holds);
        assert!(((r.max_estimate) - (c * c as f64).exp()).abs() < 1e-12);
        assert!(r.bound - r.max_estimate > 0.0);
    }
}

#[test]
fn john_nirenberg_indicator_integrand() {
    let e = ensemble(40, 40_000, 4);
    let m = IntegrandField::from_fn(&e, 1, |v, out| out[0] = if v.current()[0] > 0.0 { 0.9 } else { 0.0 }).unwrap();
    let r = john_nirenberg_check(&e, &m, &RegressionBasis::bins(16)).unwrap();
    assert!(r.applicable && r.holds, "{r:?}");
}

#[test]
fn reverse_holder_constant_closed_form() {
    let e = ensemble(20, 200_000, 5);
    let c = 0.3;
    let p = find_p_for_threshold(c).unwrap();
    let m = IntegrandField::constant(&e, &[c]).unwrap();
    let r = reverse_holder_check(&e, &m, p, &RegressionBasis::bins(4)).unwrap();
    assert!(r.applicable && r.holds, "{r:?}");
    for (k, v) in r.per_node.iter().enumerate() {
        let tau = 1.0 - k as f64 / 20.0;
        let exact = (p.p() * (p.p() - 1.0) * c * c * tau / 2.0).exp();
        // exact moment sits below the explicit constant
        assert!(exact <= r.bound);
        assert!((v / exact - 1.0).abs() < 0.1, "node {k}: {v} vs {exact}");
    }
}

#[test]
fn reverse_holder_zero_integrand() {
    let e = ensemble(10, 500, 6);
    let m = IntegrandField::zeros(&e, 1);
    for p in [1.5, 2.0, 5.0] {
        let r = reverse_holder_check(&e, &m, HolderExponent::from_p(p).unwrap(), &RegressionBasis::default()).unwrap();
        assert!(r.per_node.iter().all(|v| *v == 1.0));
    }
}

#[test]
fn reverse_holder_nondecreasing_in_p() {
    let e = ensemble(20, 20_000, 7);
    let m = IntegrandField::random_markov(&e, 3, 0.3).unwrap();
    let basis = RegressionBasis::bins(8);
    let mut last = 0.0;
    for p in [1.2, 1.5, 2.0, 3.0] {
        let (c, _, _) = exponential_moment_sup(&e, &m, p, &basis).unwrap();
        assert!(c >= last);
        last = c;
    }
}

#[test]
fn girsanov_trivial_density() {
    let e = ensemble(20, 5000, 8);
    let m = IntegrandField::random_markov(&e, 9, 0.5).unwrap();
    let (r, b) = girsanov_bmo_equivalence(&e, &m, &IntegrandField::zeros(&e, 1), 0.5, &RegressionBasis::bins(8)).unwrap();
    let b = b.unwrap();
    assert!((r.ratio - 1.0).abs() < 1e-12);
    assert!(r.within && b.c1 <= 1.0 && b.c2 >= 1.0);
}

#[test]
fn girsanov_constant_pair() {
    // M = N = cW: <M, N> is deterministic and both norms equal c^2 T
    let e = ensemble(20, 20_000, 10);
    let m = IntegrandField::constant(&e, &[0.3]).unwrap();
    let (r, b) = girsanov_bmo_equivalence(&e, &m, &m, 0.5, &RegressionBasis::bins(8)).unwrap();
    let b = b.unwrap();
    assert!((r.norm_m - 0.3).abs() < 1e-12);
    assert!((r.norm_m_tilde - 0.3).abs() < 1e-12);
    assert!(r.within && b.c1 <= b.c2, "{r:?} {b:?}");
    assert!(capital_phi(b.p).unwrap() > b.k);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn norm_is_homogeneous_of_degree_two(seed in 0u64..1000, a in 0.1f64..4.0) {
        let e = ensemble(10, 400, seed);
        let m = IntegrandField::random_markov(&e, seed, 1.0).unwrap();
        let basis = RegressionBasis::polynomial(2);
        let n1 = bmo2_norm(&e, &m, &basis).unwrap().norm_sq;
        let n2 = bmo2_norm(&e, &m.scaled(a), &basis).unwrap().norm_sq;
        prop_assert!((n2 - a * a * n1).abs() <= 1e-10 * n2.max(1e-300));
    }

    #[test]
    fn constant_norm_is_exact(c in -3.0f64..3.0, t0 in 0.0f64..0.9) {
        let grid = make_grid(t0, 1.0, 8).unwrap();
        let e = simulate_brownian(grid, 50, 1, 1).unwrap();
        let m = IntegrandField::constant(&e, &[c]).unwrap();
        let n = bmo2_norm(&e, &m, &RegressionBasis::default()).unwrap().norm_sq;
        prop_assert!((n - c * c * (1.0 - t0)).abs() <= 1e-12 * (1.0 + c * c));
    }

    #[test]
    fn exponential_is_multiplicative(seed in 0u64..1000, r in 0usize..5, s in 5usize..10, t in 10usize..16) {
        let e = ensemble(16, 50, seed);
        let m = IntegrandField::random_markov(&e, seed + 1, 1.0).unwrap();
        let a = stochastic_exponential(&e, &m, r, s).unwrap();
        let b = stochastic_exponential(&e, &m, s, t).unwrap();
        let c = stochastic_exponential(&e, &m, r, t).unwrap();
        for p in 0..50 {
            prop_assert!((a[p] * b[p] / c[p] - 1.0).abs() < 1e-12);
        }
    }
}

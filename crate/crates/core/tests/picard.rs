use std::sync::Arc;

use proptest::prelude::*;
use qbsde::condexp::RegressionBasis;
use qbsde::constants::{local_parameters, StructuralConstants};
use qbsde::instances::{coupled_linear, coupled_quadratic, decoupled_pure_quadratic};
use qbsde::paths::{evaluate_terminal, make_grid, simulate_brownian, PathEnsemble};
use qbsde::picard::*;
use qbsde::scalarq::{cole_hopf_solve, DriverField, ScalarGenerator, ScalarOptions};
use qbsde::{AdaptedField, Error};

fn ensemble(t0: f64, t_end: f64, steps: usize, paths: usize, seed: u64) -> PathEnsemble {
    simulate_brownian(make_grid(t0, t_end, steps).unwrap(), paths, 1, seed).unwrap()
}

fn unit(n: usize) -> StructuralConstants {
    StructuralConstants {
        c: 1.0,
        gamma: 1.0,
        alpha: 0.0,
        n,
        d: 1,
        horizon: 1.0,
        xi_bound: 0.0,
    }
}

#[test]
fn decoupled_components_match_cole_hopf() {
    let inst = decoupled_pure_quadratic(2, 1, 1.0, 1.0).unwrap();
    let e = ensemble(0.0, 1.0, 100, 40_000, 21);
    let xi = inst.terminal_values(&e).unwrap();
    let basis = RegressionBasis::polynomial(4);
    let image = gamma_map(&BallState::zeros(&e, 2), &inst.generator, &xi, &e, &basis, &ScalarOptions::default()).unwrap();
    let ch = cole_hopf_solve(&e, 1.0, &DriverField::zeros(&e), &xi.component(0), &basis).unwrap();
    for i in 0..2 {
        let y0 = image.y.mean(0, i);
        assert!((y0 - ch.y0()).abs() / ch.y0().abs() <= 0.02, "component {i}: {y0} vs {}", ch.y0());
    }
}

#[test]
fn frozen_zero_state_removes_linear_coupling() {
    let e = ensemble(0.0, 0.5, 20, 2000, 4);
    let f = vec![ScalarGenerator::pure_quadratic(1, 1.0); 2];
    let linear: CouplingFn = Arc::new(|_, y: &[f64], _, out: &mut [f64]| {
        out[0] = 0.5 * y[1];
        out[1] = 0.5 * y[0];
    });
    let coupled = SystemGenerator::new(unit(2), f.clone(), linear, CouplingClass::Lipschitz).unwrap();
    let decoupled = SystemGenerator::decoupled(unit(2), f).unwrap();
    let xi = evaluate_terminal(&e, 2, |v, out| {
        out[0] = v.current()[0].cos();
        out[1] = v.current()[0].sin();
    })
    .unwrap();
    let basis = RegressionBasis::default();
    let zero = BallState::zeros(&e, 2);
    let a = gamma_map(&zero, &coupled, &xi, &e, &basis, &ScalarOptions::default()).unwrap();
    let b = gamma_map(&zero, &decoupled, &xi, &e, &basis, &ScalarOptions::default()).unwrap();
    assert_eq!(a.y, b.y);
    assert_eq!(a.z, b.z);
}

#[test]
fn decoupled_converges_in_two_iterations() {
    let inst = decoupled_pure_quadratic(2, 1, 1.0, 0.5).unwrap();
    let e = ensemble(0.0, 0.5, 20, 5000, 8);
    let xi = inst.terminal_values(&e).unwrap();
    let (sol, trace) = local_solve(&inst.generator, &xi, &e, &RegressionBasis::default(), &LocalOptions::default()).unwrap();
    assert!(sol.iterations <= 2);
    assert_eq!(trace.rows.len(), sol.iterations);
    assert!(sol.residual <= 2.0 * LocalOptions::default().tol);
}

#[test]
fn diagonality_with_zero_coupling() {
    let inst = decoupled_pure_quadratic(2, 1, 1.0, 0.5).unwrap();
    let e = ensemble(0.0, 0.5, 10, 2000, 9);
    let xi = inst.terminal_values(&e).unwrap();
    let basis = RegressionBasis::default();
    let base = BallState::zeros(&e, 2);
    let mut v = AdaptedField::zeros(e.grid().n_nodes(), e.n_paths(), 2);
    for k in 0..e.steps() {
        for p in 0..e.n_paths() {
            v.get_mut(k, p)[1] = 5.0 * e.w(k, p)[0].tanh();
        }
    }
    let perturbed = BallState::new(&e, base.u.clone(), v, &basis).unwrap();
    let a = gamma_map(&base, &inst.generator, &xi, &e, &basis, &ScalarOptions::default()).unwrap();
    let b = gamma_map(&perturbed, &inst.generator, &xi, &e, &basis, &ScalarOptions::default()).unwrap();
    for k in 0..e.grid().n_nodes() {
        assert_eq!(a.y.component(k, 0), b.y.component(k, 0));
    }
}

#[test]
fn coupled_linear_short_horizon_closed_form() {
    // Y_0 = e^{BT} e^{-T/2} (cos aT, sin aT); averaged over independent ensembles
    let inst = coupled_linear(0.25).unwrap();
    let exact = inst.closed_form_y0.clone().unwrap();
    let basis = RegressionBasis::polynomial(5);
    let mut estimates = Vec::new();
    for seed in 0..8 {
        let e = ensemble(0.0, 0.25, 25, 5000, 100 + seed);
        let xi = inst.terminal_values(&e).unwrap();
        let (sol, _) = local_solve(&inst.generator, &xi, &e, &basis, &LocalOptions::default()).unwrap();
        estimates.push(sol.y0());
    }
    for i in 0..2 {
        let v: Vec<f64> = estimates.iter().map(|y| y[i]).collect();
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        let se = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
        assert!((m - exact[i]).abs() <= 3.0 * se, "component {i}: {m} vs {} (se {se})", exact[i]);
    }
}

#[test]
fn coupled_quadratic_contracts_geometrically() {
    let mut ratios = Vec::new();
    for k in 0..4 {
        let eps = 0.5 / 2f64.powi(k);
        let inst = coupled_quadratic(eps).unwrap();
        let e = ensemble(0.0, eps, 20, 5000, 7);
        let xi = inst.terminal_values(&e).unwrap();
        let opts = LocalOptions {
            tol: 1e-8,
            ..Default::default()
        };
        let (sol, trace) = local_solve(&inst.generator, &xi, &e, &RegressionBasis::default(), &opts).unwrap();
        assert!(!trace.non_contraction);
        assert!(trace.rows.iter().all(|r| r.y_dist_sup >= 0.0 && r.z_dist_bmo >= 0.0));
        assert!(trace.rows[0].ratio.is_none() && trace.rows[1..].iter().all(|r| r.ratio.is_some()));
        assert!(sol.residual <= 2.0 * opts.tol);
        ratios.push(trace.mean_ratio().unwrap());
    }
    assert!(ratios.windows(2).all(|w| w[1] < w[0]), "{ratios:?}");
}

#[test]
fn exhausted_iterations_carry_the_distances() {
    let inst = coupled_quadratic(0.5).unwrap();
    let e = ensemble(0.0, 0.5, 10, 1000, 3);
    let xi = inst.terminal_values(&e).unwrap();
    let opts = LocalOptions {
        tol: 1e-14,
        max_iter: 3,
        ..Default::default()
    };
    match local_solve(&inst.generator, &xi, &e, &RegressionBasis::default(), &opts) {
        Err(Error::NotConverged { iterations, distances, .. }) => {
            assert_eq!(iterations, 3);
            assert_eq!(distances.len(), 3);
        }
        other => panic!("expected NotConverged, got {other:?}"),
    }
}

#[test]
fn certified_mode_rejects_long_intervals() {
    let inst = coupled_quadratic(0.5).unwrap();
    let e = ensemble(0.0, 0.5, 10, 100, 3);
    let xi = inst.terminal_values(&e).unwrap();
    let opts = LocalOptions {
        mode: SolveMode::Certified,
        ..Default::default()
    };
    assert!(matches!(
        local_solve(&inst.generator, &xi, &e, &RegressionBasis::default(), &opts),
        Err(Error::InvalidArgument(_))
    ));
}

#[test]
fn contraction_probe_trivial_cases() {
    let inst = coupled_quadratic(0.25).unwrap();
    let e = ensemble(0.0, 0.25, 10, 2000, 5);
    let xi = inst.terminal_values(&e).unwrap();
    let basis = RegressionBasis::default();
    let zero = BallState::zeros(&e, 2);
    let r = contraction_probe(&zero, &zero, &inst.generator, &xi, &e, &basis, &ScalarOptions::default()).unwrap();
    assert!(r.identity_input && r.ratio.is_none() && r.output_distance == 0.0);

    let u = qbsde::picard::conditional_extension(&e, &xi, &basis).unwrap();
    let other = BallState::new(&e, u, AdaptedField::zeros(e.grid().n_nodes(), e.n_paths(), 2), &basis).unwrap();
    let dec = decoupled_pure_quadratic(2, 1, 1.0, 0.25).unwrap();
    let r = contraction_probe(&zero, &other, &dec.generator, &xi, &e, &basis, &ScalarOptions::default()).unwrap();
    assert_eq!(r.ratio, Some(0.0));

    let r = contraction_probe(&zero, &other, &inst.generator, &xi, &e, &basis, &ScalarOptions::default()).unwrap();
    let ratio = r.ratio.unwrap();
    assert!(ratio > 0.0 && ratio < 1.0, "{ratio}");
    assert_eq!(r.beta_bmo_sq.len(), 2);
    assert!(r.beta_bmo_sq.iter().all(|b| b.is_finite() && *b >= 0.0));
}

#[test]
fn contraction_ratio_shrinks_with_the_interval() {
    let mut ratios = Vec::new();
    for k in 0..4 {
        let eps = 0.4 / 2f64.powi(k);
        let inst = coupled_quadratic(eps).unwrap();
        let e = ensemble(0.0, eps, 16, 4000, 12);
        let xi = inst.terminal_values(&e).unwrap();
        let basis = RegressionBasis::default();
        let a = BallState::zeros(&e, 2);
        let u = conditional_extension(&e, &xi, &basis).unwrap();
        let b = BallState::new(&e, u, AdaptedField::zeros(e.grid().n_nodes(), e.n_paths(), 2), &basis).unwrap();
        let r = contraction_probe(&a, &b, &inst.generator, &xi, &e, &basis, &ScalarOptions::default()).unwrap();
        ratios.push(r.ratio.unwrap());
    }
    assert!(ratios.windows(2).all(|w| w[1] < w[0]), "{ratios:?}");
}

/// Random coupled instance with `|h| <= C(1 + |y| + |z|)` and bounded terminal.
fn random_instance(seed: u64) -> (SystemGenerator, f64, f64) {
    let c = 0.2 + 0.1 * (seed % 5) as f64;
    let gamma = 0.5 + 0.25 * (seed % 3) as f64;
    let amp = 0.2 + 0.15 * (seed % 4) as f64;
    let s = StructuralConstants {
        c,
        gamma,
        alpha: 0.0,
        n: 2,
        d: 1,
        horizon: 1.0,
        xi_bound: 0.0,
    };
    let k = c / 2.0;
    let h: CouplingFn = Arc::new(move |_, y: &[f64], z: &[f64], out: &mut [f64]| {
        out[0] = k * (y[1].sin() + z[1].tanh());
        out[1] = k * (y[0].cos() - z[0].tanh());
    });
    let f = vec![ScalarGenerator::pure_quadratic(1, gamma); 2];
    (SystemGenerator::new(s, f, h, CouplingClass::Lipschitz).unwrap(), amp, gamma)
}

#[test]
fn gamma_keeps_the_certified_ball_invariant() {
    for seed in 0..10 {
        let (gen, amp, _) = random_instance(seed);
        // |xi| <= amp sqrt(2) on every path
        let s = gen.constants.with_xi_bound(amp * std::f64::consts::SQRT_2);
        let p = local_parameters(&s).unwrap();
        let e = ensemble(1.0 - p.epsilon, 1.0, 8, 2000, 40 + seed);
        let xi = evaluate_terminal(&e, 2, |v, out| out.fill(amp * v.current()[0].cos())).unwrap();
        let basis = RegressionBasis::default();
        let start = BallState::zeros(&e, 2);
        assert!(ball_membership(&start, &p, &s).member);
        let image = gamma_map(&start, &gen, &xi, &e, &basis, &ScalarOptions::default()).unwrap();
        let next = BallState::new(&e, image.y, image.z, &basis).unwrap();
        let m = ball_membership(&next, &p, &s);
        assert!(m.member, "seed {seed}: {m:?}");
        // Step-2 bound on the solution
        let (sol, trace) = local_solve(&gen, &xi, &e, &basis, &LocalOptions::default()).unwrap();
        assert!(trace.rows.iter().all(|r| r.in_ball == Some(true)));
        assert!(sol.y.sup_norm() <= p.step2_y_bound(&s), "seed {seed}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn zero_state_is_always_in_the_ball(
        c in 0.05f64..3.0,
        gamma in 0.1f64..3.0,
        alpha in 0.0f64..0.9,
        n in 1usize..4,
        xi in 0.0f64..2.0,
    ) {
        let s = StructuralConstants { c, gamma, alpha, n, d: 1, horizon: 1.0, xi_bound: xi };
        if let Ok(p) = local_parameters(&s) {
            let e = ensemble(0.0, 1.0, 2, 10, 1);
            let m = ball_membership(&BallState::zeros(&e, n), &p, &s);
            prop_assert!(m.member);
            prop_assert!(m.u_log_margin >= 0.0 && m.v_margin > 0.0);
        }
    }
}

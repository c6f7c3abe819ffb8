use std::sync::Arc;

use wickchaos::bsvie::*;
use wickchaos::chaos::TimeGrid;
use wickchaos::mc::{build_ensemble, Atom, Estimate, LevyModel};

fn levy() -> LevyModel {
    LevyModel::new(vec![Atom { zeta: 0.4, nu: 1.5 }, Atom { zeta: -0.3, nu: 0.8 }]).unwrap()
}

fn affine_spec(grid: TimeGrid, pin: Pin) -> BsvieSpec {
    BsvieSpec {
        grid,
        phi: VolterraKernel::from_fn(|t, r| 0.5 * (-(r - t)).exp() + 0.2 * t, 0.7),
        xi_drift: Drift::Deterministic(Arc::new(|s| 0.3 + 0.2 * s)),
        beta: vec![constant_fn(0.25), Arc::new(|s| -0.2 * s)],
        free: FreeTerm::Affine {
            a: Arc::new(|t| 1.0 + t),
            b: Arc::new(|t| 0.5 + 0.5 * t * t),
            c: constant_fn(0.8),
            pin,
        },
        levy: Some(levy()),
    }
}

#[test]
fn girsanov_sanity() {
    let g = TimeGrid::new(1.0, 32).unwrap();
    let spec = affine_spec(g, Pin::Terminal);
    let ens = build_ensemble(11, 40_000, 8, g, spec.levy.as_ref()).unwrap();
    let gir = girsanov_build(&spec, &ens).unwrap();
    assert!(gir.m.iter().all(|&m| m > 0.0));
    assert!((0..100).all(|p| gir.m_path(p)[0] == 1.0));
    let mt = gir.mean_terminal();
    assert!(mt.within(1.0, 3.0, 0.0), "{mt:?}");
    let bq: Vec<f64> = (0..ens.n_paths()).map(|p| gir.b_q(&ens, p, g.steps)).collect();
    let e = gir.expect_q(&bq);
    assert!(e.within(0.0, 3.0, 0.0), "{e:?}");
}

#[test]
fn deterministic_free_term_residual() {
    let g = TimeGrid::new(1.0, 64).unwrap();
    for phi in [
        VolterraKernel::exp_decay(1.0, 1.0),
        VolterraKernel::constant(0.8),
        VolterraKernel::from_fn(|t, r| (t - r).cos(), 1.0),
    ] {
        let spec = BsvieSpec::deterministic(g, phi, Arc::new(|t: f64| (2.0 * t).sin() + 1.0));
        let res = resolvent_psi(&spec.phi, g, 1e-12).unwrap();
        let ens = build_ensemble(0, 2, 1, g, None).unwrap();
        let sol = bsvie_solve_y(&spec, &res, &ens).unwrap();
        let r = deterministic_residual(&spec, &sol).unwrap();
        assert!(r <= 1e-6, "residual {r}");
        let zk = bsvie_solve_zk(&spec, &sol).unwrap();
        assert_eq!(zk.z.max_abs(), 0.0);
    }
}

#[test]
fn affine_residual_mean_zero_and_shrinks() {
    let mut l2 = vec![];
    for m in [16, 32, 64] {
        let g = TimeGrid::new(1.0, m).unwrap();
        let spec = affine_spec(g, Pin::Terminal);
        let res = resolvent_psi(&spec.phi, g, 1e-12).unwrap();
        let ens = build_ensemble(7, 4000, 8, g, spec.levy.as_ref()).unwrap();
        let sol = bsvie_solve_y(&spec, &res, &ens).unwrap();
        let zk = bsvie_solve_zk(&spec, &sol).unwrap();
        let rep = equation_residual(&spec, &sol, &zk, &ens).unwrap();
        assert!(rep.mean_zero, "M = {m}: {:?}", rep.per_t);
        l2.push(rep.l2);
    }
    assert!(l2[1] < l2[0] && l2[2] < l2[1], "{l2:?}");
}

#[test]
fn auxiliary_u_is_q_martingale_increment() {
    let g = TimeGrid::new(1.0, 32).unwrap();
    let spec = affine_spec(g, Pin::Current);
    let res = resolvent_psi(&spec.phi, g, 1e-12).unwrap();
    let ens = build_ensemble(3, 20_000, 8, g, spec.levy.as_ref()).unwrap();
    let sol = bsvie_solve_y(&spec, &res, &ens).unwrap();
    let u = auxiliary_u(&spec, &sol, &ens);
    let gir = girsanov_build(&spec, &ens).unwrap();
    for i in [0, 8, 16] {
        let ui: Vec<f64> = (0..ens.n_paths()).map(|p| u[p * g.len() + i]).collect();
        let e = gir.expect_q(&ui);
        // trapezoid error in ∫Φ Y ds on the grid adds a small bias
        assert!(e.within(0.0, 3.0, 5e-3), "t index {i}: {e:?}");
    }
}

#[test]
fn bayes_regression_agrees_with_closed_form() {
    let g = TimeGrid::new(1.0, 16).unwrap();
    let mut spec = affine_spec(g, Pin::Terminal);
    spec.xi_drift = Drift::Deterministic(constant_fn(0.3));
    spec.beta = vec![constant_fn(0.25), constant_fn(-0.2)];
    let res = resolvent_psi(&spec.phi, g, 1e-12).unwrap();
    let rms = |n: usize| {
        let ens = build_ensemble(9, n, 8, g, spec.levy.as_ref()).unwrap();
        bayes_cross_check(&spec, &res, &ens, 2).unwrap()
    };
    let (small, large) = (rms(20_000), rms(80_000));
    for i in 1..g.steps {
        assert!(small.rms[i] < 0.1 * small.spread[i], "i = {i}: {} vs {}", small.rms[i], small.spread[i]);
    }
    // regression noise, not bias: quadrupling the paths roughly halves it
    let avg = |c: &BayesCrossCheck| c.rms.iter().sum::<f64>() / c.rms.len() as f64;
    assert!(avg(&large) < 0.75 * avg(&small), "{} then {}", avg(&small), avg(&large));
}

#[test]
fn adapted_drift_goes_through_regression() {
    let g = TimeGrid::new(1.0, 8).unwrap();
    let mut spec = affine_spec(g, Pin::Terminal);
    spec.xi_drift = Drift::Adapted(Arc::new(|ens, p, i| 0.2 * ens.brownian(p)[i].tanh()));
    let res = resolvent_psi(&spec.phi, g, 1e-12).unwrap();
    let ens = build_ensemble(2, 5000, 4, g, spec.levy.as_ref()).unwrap();
    let sol = bsvie_solve_y(&spec, &res, &ens).unwrap();
    assert!(matches!(sol.form, SolutionForm::Regression { .. }));
    assert!(bsvie_solve_zk(&spec, &sol).is_err());
}

#[test]
fn pinned_terminal_brownian_z() {
    // Φ = 0, F(t) = B(T): Z(t, s) = 1
    let g = TimeGrid::new(1.0, 16).unwrap();
    let mut spec = BsvieSpec::deterministic(g, VolterraKernel::zero(), constant_fn(0.0));
    spec.free = FreeTerm::Affine { a: constant_fn(0.0), b: constant_fn(1.0), c: constant_fn(0.0), pin: Pin::Terminal };
    let res = resolvent_psi(&spec.phi, g, 1e-12).unwrap();
    let ens = build_ensemble(5, 4, 4, g, None).unwrap();
    let sol = bsvie_solve_y(&spec, &res, &ens).unwrap();
    let zk = bsvie_solve_zk(&spec, &sol).unwrap();
    assert!(zk.z.rows.iter().flatten().all(|&z| (z - 1.0).abs() < 1e-15));
}

#[test]
fn smoothness_energy_is_finite_and_settles() {
    let rep = smoothness_report(|g| Ok(affine_spec(g, Pin::Terminal)), 1.0, &[8, 16, 32, 64], 1e-12).unwrap();
    assert!(rep.finite && rep.stable, "{rep:?}");
}

#[test]
fn estimate_of_weighted_b_q_under_no_drift() {
    let g = TimeGrid::new(1.0, 8).unwrap();
    let spec = BsvieSpec::deterministic(g, VolterraKernel::zero(), constant_fn(1.0));
    let ens = build_ensemble(1, 1000, 4, g, None).unwrap();
    let gir = girsanov_build(&spec, &ens).unwrap();
    let e: Estimate = gir.mean_terminal();
    assert_eq!(e.estimate, 1.0);
}

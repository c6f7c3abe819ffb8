use std::sync::Arc;

use wickchaos::bsde::TerminalAffine;
use wickchaos::bsvie::constant_fn;
use wickchaos::chaos::{KernelChaos, TimeGrid};
use wickchaos::control::*;
use wickchaos::malliavin::{duality_check, AdaptedIntegrand};
use wickchaos::mc::{build_ensemble, Atom, LevyModel};

fn problem(x0: f64, constrained: bool, m: usize) -> LqProblem {
    LqProblem {
        x0,
        sigma: 0.3,
        gamma: vec![0.05, -0.04],
        grid: TimeGrid::new(1.0, m).unwrap(),
        levy: Some(LevyModel::new(vec![Atom { zeta: 1.0, nu: 1.0 }, Atom { zeta: -1.0, nu: 0.5 }]).unwrap()),
        constrained,
    }
}

#[test]
fn inactive_constraint_matches_feedback_benchmark() {
    let prob = problem(-5.0, true, 20);
    let ens = build_ensemble(21, 100_000, 8, prob.grid, prob.levy.as_ref()).unwrap();
    let it = lq_solve(&prob, &ens, 50, 1e-4).unwrap();
    assert!(it.converged, "{:?}", it.history);
    let bench = unconstrained_benchmark(&LqProblem { constrained: false, ..prob.clone() }, &ens).unwrap();
    let (a, b) = (it.objective, bench.objective);
    let sigma = (a.stderr.powi(2) + b.stderr.powi(2)).sqrt();
    assert!((a.estimate - b.estimate).abs() <= 3.0 * sigma, "{a:?} vs {b:?}");
    let rep = stationarity_check(&prob, &it, &ens, &[0.0, 0.5, 1.0, 2.0, 5.0], 1e-3).unwrap();
    assert!(rep.pass, "{:?}", rep.rows.iter().filter(|r| !r.pass).collect::<Vec<_>>());
    // benchmark feedback is stationary too
    let rep = stationarity_check(&prob, &bench, &ens, &[0.0, 1.0, 5.0], 1e-3).unwrap();
    assert!(rep.rows.iter().all(|r| r.interior_residual < 1e-2));
}

#[test]
fn constrained_run_respects_boundary() {
    let prob = problem(0.4, true, 16);
    let ens = build_ensemble(5, 40_000, 8, prob.grid, prob.levy.as_ref()).unwrap();
    let it = lq_solve(&prob, &ens, 50, 1e-4).unwrap();
    assert!(it.converged);
    assert!(it.paths.u.iter().all(|&u| u >= 0.0));
    // û = max(p̂, 0) pathwise by construction
    assert!(it.paths.u.iter().zip(&it.p).all(|(u, p)| *u == p.max(0.0)));
    let rep = stationarity_check(&prob, &it, &ens, &[0.0, 0.25, 1.0], 1e-3).unwrap();
    assert!(rep.rows.iter().any(|r| r.interior_fraction < 1.0));
    assert!(rep.pass, "{:?}", rep.rows.iter().filter(|r| !r.pass).collect::<Vec<_>>());
}

#[test]
fn perturbations_do_not_improve() {
    let prob = problem(-1.0, true, 16);
    let ens = build_ensemble(8, 20_000, 8, prob.grid, prob.levy.as_ref()).unwrap();
    let it = lq_solve(&prob, &ens, 50, 1e-4).unwrap();
    let w = prob.grid.len();
    let base: Vec<f64> = it.paths.u.clone();
    let j0 = lq_objective(&simulate_lq(&prob, &ens, |p, i, _| base[p * w + i]).unwrap());
    for k in 0..10 {
        let amp = 0.05 * (k as f64 + 1.0) * if k % 2 == 0 { 1.0 } else { -1.0 };
        let freq = 1.0 + k as f64;
        let j1 = lq_objective(
            &simulate_lq(&prob, &ens, |p, i, _| (base[p * w + i] + amp * (freq * prob.grid.t(i)).cos()).max(0.0))
                .unwrap(),
        );
        let sigma = (j0.stderr.powi(2) + j1.stderr.powi(2)).sqrt();
        assert!(j0.estimate >= j1.estimate - 3.0 * sigma, "perturbation {k}: {j0:?} < {j1:?}");
    }
}

#[test]
fn feedback_beats_simple_controls() {
    let prob = LqProblem { constrained: false, ..problem(-2.0, false, 16) };
    let ens = build_ensemble(2, 20_000, 8, prob.grid, prob.levy.as_ref()).unwrap();
    let star = unconstrained_benchmark(&prob, &ens).unwrap().objective;
    for c in [0.0, 0.5, 1.0, 2.0] {
        let j = lq_objective(&simulate_lq(&prob, &ens, |_, _, _| c).unwrap());
        let sigma = (star.stderr.powi(2) + j.stderr.powi(2)).sqrt();
        assert!(star.estimate >= j.estimate - 3.0 * sigma, "u ≡ {c}");
    }
}

#[test]
fn adjoint_duality_spot_check() {
    // under u*, X(T) = x₀/(T+1) + ∫ σ/(T+1−s) dB (Brownian part only)
    let g = TimeGrid::new(1.0, 32).unwrap();
    let f = KernelChaos::constant(g, 1, -2.5).with_kernel(1, |s: &[f64]| 0.3 / (2.0 - s[0])).unwrap();
    let u = AdaptedIntegrand::deterministic(g, &(0..=32).map(|i| 1.0 + g.t(i)).collect::<Vec<_>>()).unwrap();
    let ens = build_ensemble(3, 20_000, 8, g, None).unwrap();
    let rep = duality_check(&f, &u, &ens).unwrap();
    assert!(rep.pass, "{rep:?}");
}

#[test]
fn cashflow_degenerate_objective() {
    let g = TimeGrid::new(1.0, 32).unwrap();
    let (b0, db) = exp_memory(0.0, 0.0);
    let c = 1.7;
    let spec = CashflowSpec {
        grid: g,
        x0: 0.8,
        b0,
        db0_dt: db,
        sigma0: constant_fn(0.0),
        gamma0: vec![],
        theta: TerminalAffine { c0: c, c_b: 0.0, c_n: 0.0 },
        levy: None,
    };
    let ens = build_ensemble(1, 1000, 4, g, None).unwrap();
    let sol = cashflow_solve(&spec, &ens, 1e-12).unwrap();
    let want = c * 0.8 - (1.0 + c.ln());
    assert!(sol.objective.within(want, 3.0, 1e-12));
    assert!(sol.first_order_residual <= 1e-6);
}

#[test]
fn cashflow_with_memory_and_noise() {
    let g = TimeGrid::new(1.0, 24).unwrap();
    let (b0, db) = exp_memory(0.3, 1.5);
    let levy = LevyModel::new(vec![Atom { zeta: 0.5, nu: 1.0 }]).unwrap();
    let spec = CashflowSpec {
        grid: g,
        x0: 1.0,
        b0,
        db0_dt: db,
        sigma0: Arc::new(|s| 0.2 + 0.1 * s),
        gamma0: vec![constant_fn(0.1)],
        theta: TerminalAffine { c0: 2.0, c_b: 0.1, c_n: 0.1 },
        levy: Some(levy),
    };
    let ens = build_ensemble(6, 5000, 8, g, spec.levy.as_ref()).unwrap();
    let sol = cashflow_solve(&spec, &ens, 1e-12).unwrap();
    assert!(sol.u.iter().all(|&u| u > 0.0));
    assert!(sol.first_order_residual <= 1e-6);
    assert!(sol.hamiltonian_gradient <= 1e-6, "{}", sol.hamiltonian_gradient);
    assert!(sol.objective.estimate.is_finite());
    // û beats a scaled-down control on the same paths
    let c = sol.concavity.clone();
    assert!(c.running_reward_strictly_concave && c.hamiltonian_concave && c.terminal_reward_concave);
}

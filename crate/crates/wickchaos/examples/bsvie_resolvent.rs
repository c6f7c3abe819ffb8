//! Resolvent of a Volterra kernel and the solution of a linear BSVIE.

use std::sync::Arc;

use wickchaos::bsvie::{
    bsvie_solve_y, bsvie_solve_zk, constant_fn, resolvent_psi, BsvieSpec, Drift, FreeTerm, Pin, VolterraKernel,
};
use wickchaos::chaos::TimeGrid;
use wickchaos::mc::{build_ensemble, Atom, LevyModel};

fn main() -> wickchaos::Result<()> {
    let grid = TimeGrid::new(1.0, 32)?;
    for (name, k) in [("e^{-(r-t)}", VolterraKernel::exp_decay(1.0, 1.0)), ("0.8", VolterraKernel::constant(0.8))] {
        let res = resolvent_psi(&k, grid, 1e-13)?;
        println!(
            "kernel {name:<10} terms {:>2}, Psi(0,T) = {:.8}, identity defect {:.1e}",
            res.n_terms,
            res.psi_grid().get(0, grid.steps),
            res.identity_defect()
        );
    }

    let levy = LevyModel::new(vec![Atom { zeta: 0.5, nu: 1.0 }])?;
    let spec = BsvieSpec {
        grid,
        phi: VolterraKernel::exp_decay(1.0, 1.0),
        xi_drift: Drift::Deterministic(constant_fn(0.3)),
        beta: vec![constant_fn(0.2)],
        free: FreeTerm::Affine {
            a: Arc::new(|t| 1.0 + t),
            b: constant_fn(0.5),
            c: constant_fn(0.1),
            pin: Pin::Terminal,
        },
        levy: Some(levy.clone()),
    };
    let res = resolvent_psi(&spec.phi, grid, 1e-13)?;
    let ens = build_ensemble(2, 10_000, 8, grid, Some(&levy))?;
    let sol = bsvie_solve_y(&spec, &res, &ens)?;
    let zk = bsvie_solve_zk(&spec, &sol)?;
    let mean = sol.mean();
    for i in (0..grid.len()).step_by(8) {
        println!(
            "t = {:.3}: E[Y] = {:.5} ± {:.5}, Z(t,T) = {:.5}, K(t,T) = {:.5}",
            grid.t(i),
            mean[i].estimate,
            mean[i].stderr,
            zk.z.get(i, grid.steps),
            zk.k[0].get(i, grid.steps)
        );
    }
    Ok(())
}

//! Consumption from a cash flow with memory: the adjoint is a BSVIE and û = 1/p̂.

use wickchaos::bsde::TerminalAffine;
use wickchaos::bsvie::constant_fn;
use wickchaos::chaos::TimeGrid;
use wickchaos::control::{cashflow_solve, exp_memory, CashflowSpec};
use wickchaos::mc::{build_ensemble, Atom, Estimate, LevyModel};

fn main() -> wickchaos::Result<()> {
    let grid = TimeGrid::new(1.0, 24)?;
    let levy = LevyModel::new(vec![Atom { zeta: 0.5, nu: 1.0 }])?;
    for scale in [0.0, 0.3, 0.6] {
        let (b0, db0_dt) = exp_memory(scale, 1.5);
        let spec = CashflowSpec {
            grid,
            x0: 1.0,
            b0,
            db0_dt,
            sigma0: constant_fn(0.2),
            gamma0: vec![constant_fn(0.1)],
            theta: TerminalAffine { c0: 2.0, c_b: 0.1, c_n: 0.1 },
            levy: Some(levy.clone()),
        };
        let ens = build_ensemble(4, 5_000, 8, grid, Some(&levy))?;
        let sol = cashflow_solve(&spec, &ens, 1e-12)?;
        let w = grid.len();
        let u0 = Estimate::of(&(0..ens.n_paths()).map(|p| sol.u[p * w]).collect::<Vec<_>>());
        println!(
            "memory {scale:.1}: J = {:.5} ± {:.5}, u(0) = {:.5}, |1/u - p| = {:.1e}, |dH/du| = {:.1e}",
            sol.objective.estimate,
            sol.objective.stderr,
            u0.estimate,
            sol.first_order_residual,
            sol.hamiltonian_gradient
        );
    }
    Ok(())
}

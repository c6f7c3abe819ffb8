//! Sign-constrained LQ control by Picard iteration on the maximum principle.

use wickchaos::control::{lq_solve, unconstrained_benchmark, LqProblem};
use wickchaos::mc::build_ensemble;
use wickchaos::selftest::lq_problem;

fn main() -> wickchaos::Result<()> {
    for x0 in [-2.0, 0.4] {
        let prob = lq_problem(x0, true, 16)?;
        let ens = build_ensemble(9, 20_000, 8, prob.grid, prob.levy.as_ref())?;
        let it = lq_solve(&prob, &ens, 50, 1e-4)?;
        let bench = unconstrained_benchmark(&LqProblem { constrained: false, ..prob.clone() }, &ens)?;
        let w = prob.grid.len();
        let active = (0..w - 1).map(|i| it.paths.u_at(i).iter().filter(|&&u| u == 0.0).count()).sum::<usize>() as f64
            / ((w - 1) * ens.n_paths()) as f64;
        println!(
            "x0 = {x0:>4}: {} iterations (converged {}), J = {:.5} ± {:.5}, unconstrained J = {:.5}, u = 0 on {:.1}% of (t, path)",
            it.iteration,
            it.converged,
            it.objective.estimate,
            it.objective.stderr,
            bench.objective.estimate,
            100.0 * active
        );
    }
    Ok(())
}

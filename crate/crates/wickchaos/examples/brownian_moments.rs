//! Monte Carlo ensemble: moments of B(t) and compensated jump sums.

use wickchaos::chaos::TimeGrid;
use wickchaos::mc::{build_ensemble, Atom, Estimate, LevyModel};

fn main() -> wickchaos::Result<()> {
    let grid = TimeGrid::new(1.0, 64)?;
    let levy = LevyModel::new(vec![Atom { zeta: 0.5, nu: 2.0 }, Atom { zeta: -1.0, nu: 0.5 }])?;
    let ens = build_ensemble(11, 50_000, 100, grid, Some(&levy))?;
    println!("{:>6} {:>22} {:>22} {:>10}", "t", "E[B^2]", "E[B^4]", "3t^2");
    for i in [16, 32, 64] {
        let t = grid.t(i);
        let b: Vec<f64> = (0..ens.n_paths()).map(|p| ens.brownian(p)[i]).collect();
        let m2 = Estimate::of(&b.iter().map(|v| v * v).collect::<Vec<_>>());
        let m4 = Estimate::of(&b.iter().map(|v| v.powi(4)).collect::<Vec<_>>());
        println!(
            "{t:>6} {:>12.5} ± {:<7.5} {:>12.5} ± {:<7.5} {:>10.5}",
            m2.estimate,
            m2.stderr,
            m4.estimate,
            m4.stderr,
            3.0 * t * t
        );
    }
    let j: Vec<f64> = (0..ens.n_paths()).map(|p| ens.compensated_jump_sum(p, 1.0)).collect();
    let e = Estimate::of(&j);
    let var = Estimate::of(&j.iter().map(|v| v * v).collect::<Vec<_>>());
    println!(
        "compensated J(1): mean {:.4} ± {:.4}, E[J^2] {:.4} (Σ ζ²ν = {:.4})",
        e.estimate, e.stderr, var.estimate, 1.0
    );
    Ok(())
}

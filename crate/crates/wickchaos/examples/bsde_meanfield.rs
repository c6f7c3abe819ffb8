//! Linear BSDE with jumps and its mean-field extension.

use wickchaos::bsde::{linear_bsde_solve, meanfield_bsde_solve, LinearBsdeSpec, MeanFieldMode, TerminalAffine};
use wickchaos::chaos::TimeGrid;
use wickchaos::mc::{build_ensemble, Atom, Estimate, LevyModel};

fn main() -> wickchaos::Result<()> {
    let grid = TimeGrid::new(1.0, 31)?;
    let levy = LevyModel::new(vec![Atom { zeta: 0.4, nu: 1.5 }])?;
    let mut spec = LinearBsdeSpec::zero(grid, Some(levy.clone()));
    spec.alpha1 = vec![0.2; grid.len()];
    spec.beta1 = vec![0.1; grid.len()];
    spec.eta1 = vec![vec![0.25; grid.len()]];
    spec.gamma = vec![0.5; grid.len()];
    spec.xi = TerminalAffine { c0: 1.0, c_b: 0.5, c_n: 0.2 };
    let ens = build_ensemble(5, 20_000, 8, grid, Some(&levy))?;

    let plain = linear_bsde_solve(&spec, &ens)?;
    println!(
        "Y(0) = {:.6}, Z(0) = {:.6}, K(0) = {:.6}",
        Estimate::of(&plain.y_at(0)).estimate,
        plain.z[0],
        plain.k[0][0]
    );

    spec.alpha2 = vec![0.5; grid.len()];
    spec.beta2 = vec![0.4; grid.len()];
    spec.eta2 = vec![vec![0.3; grid.len()]];
    let mf = meanfield_bsde_solve(&spec, MeanFieldMode::WithDerivativeDrift, None, 1e-12, Some(&ens))?;
    println!(
        "mean-field: {} cells per interval, operator norm {:.3}, continuity {:.1e}",
        mf.cells_per_interval, mf.norm, mf.continuity
    );
    let y = mf.y.as_ref().expect("ensemble given");
    println!("{:>8} {:>10} {:>10} {:>10}", "t", "Ybar", "E[Y]", "Zbar");
    for i in (0..grid.len()).step_by(5) {
        println!(
            "{:>8.4} {:>10.5} {:>10.5} {:>10.5}",
            grid.t(i),
            mf.v.ybar[i],
            Estimate::of(&y.y_at(i)).estimate,
            mf.v.zbar[i]
        );
    }
    Ok(())
}

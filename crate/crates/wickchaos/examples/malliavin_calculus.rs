//! Malliavin derivative, Skorohod integral and the Clark–Ocone integrand.

use wickchaos::chaos::{brownian_chaos_at, ChaosProcess, HermiteBasis, KernelChaos, TimeGrid, Truncation};
use wickchaos::malliavin::{clark_ocone, malliavin_derivative_at, skorohod_integral};
use wickchaos::mc::build_ensemble;
use wickchaos::wick::wick_power;

fn main() -> wickchaos::Result<()> {
    let grid = TimeGrid::new(1.0, 32)?;
    let basis = HermiteBasis::new(10, grid)?;
    let tr = Truncation::new(10, 3);

    // D_t(B(T)⋄B(T)) = 2 g(t) B(T) with g(t) = Σ_k e_k(t) E_k(T), the projection of 1 on [0, T]
    let bt = brownian_chaos_at(grid.steps, &basis, tr)?;
    let i = 8;
    let g: f64 = (1..=basis.k()).map(|k| basis.e(k, i) * basis.big_e(k, grid.steps)).sum();
    let d = malliavin_derivative_at(&wick_power(&bt, 2)?, i, &basis)?;
    println!("g(t_{i}) = {g:.4}, max |D_t(B<>2) - 2 g B(T)| = {:.2e}", d.max_abs_diff(&bt.scale(2.0 * g)));

    // δ(1) = B(T)
    let ones = ChaosProcess::deterministic(tr, grid, vec![1.0; grid.len()])?;
    println!("max |δ(1) - B(T)| = {:.2e}", skorohod_integral(&ones, &basis)?.max_abs_diff(&bt));

    // Clark–Ocone for F = B(T)²: φ(t) = 2 B(t)
    let f = KernelChaos::constant(grid, 2, 1.0).with_kernel(2, |_| 1.0)?;
    let phi = clark_ocone(&f);
    let ens = build_ensemble(3, 5_000, 4, grid, None)?;
    let worst = (0..ens.n_paths())
        .map(|p| {
            let db = ens.increments(p);
            (f.evaluate_increments(&db) - f.expectation() - phi.ito_sum(&db)).abs()
        })
        .fold(0.0, f64::max);
    println!("Clark-Ocone: max pathwise |F - E F - Σ φ ΔB| = {worst:.2e} over {} paths", ens.n_paths());
    Ok(())
}

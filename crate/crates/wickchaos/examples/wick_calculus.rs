//! Brownian motion as a chaos element, its Wick powers and the Wick exponential.

use wickchaos::chaos::{brownian_chaos, hida_norm, HermiteBasis, TimeGrid, Truncation};
use wickchaos::wick::{wick_exp, wick_exp_tail_bound, wick_power, wick_product};

fn main() -> wickchaos::Result<()> {
    let grid = TimeGrid::new(1.0, 64)?;
    let basis = HermiteBasis::new(12, grid)?;
    let tr = Truncation::new(12, 4);
    let t = 0.5;
    let b = brownian_chaos(t, &basis, tr)?;
    println!("B({t}): {} terms, E = {}, ||.||_0^2 = {:.6}", b.n_terms(), b.expectation(), hida_norm(&b, 0.0).powi(2));

    let sq = wick_power(&b, 2)?;
    println!("B<>B: {} terms, E = {:.2e}  (the ordinary square would have E = Var B)", sq.n_terms(), sq.expectation());
    let cube = wick_product(&sq, &b)?;
    println!("B<>3: order {}, E = {:.2e}", cube.max_order(), cube.expectation());

    let e = wick_exp(&b, 5)?;
    println!(
        "exp<>(B): E = {:.6}, second moment = {:.6} (exact e^Var = {:.6}), tail bound {:.2e}",
        e.expectation(),
        hida_norm(&e, 0.0).powi(2),
        hida_norm(&b, 0.0).powi(2).exp(),
        wick_exp_tail_bound(&b, 5)
    );
    Ok(())
}

//! Wick product, powers and exponential on Hermite chaos.

use crate::chaos::{factorial_f64 as factorial, ln_factorial, HermiteChaos, MultiIndex, Overflow, Truncation};
use crate::error::{ChaosError, Result};

/// Terms kept by [`wick_exp`] unless told otherwise.
pub const WICK_EXP_TERMS: usize = 12;

/// `X ⋄ Y` with the order cap `max(N_X, N_Y)` and strict overflow.
pub fn wick_product(x: &HermiteChaos, y: &HermiteChaos) -> Result<HermiteChaos> {
    let cap = x.truncation().n.max(y.truncation().n);
    wick_product_with(x, y, cap, Overflow::Strict)
}

/// `X ⋄ Y = Σ a_α b_β H_{α+β}` keeping orders up to `min(N_X + N_Y, cap)`.
pub fn wick_product_with(x: &HermiteChaos, y: &HermiteChaos, cap: usize, mode: Overflow) -> Result<HermiteChaos> {
    let (tx, ty) = (x.truncation(), y.truncation());
    if tx.k != ty.k {
        return Err(ChaosError::TruncationMismatch(format!("K = {} vs K = {}", tx.k, ty.k)));
    }
    let n = (tx.n + ty.n).min(cap).max(1);
    let mut out = HermiteChaos::zero(Truncation::new(tx.k, n));
    let mut dropped = 0.0;
    for (a, ca) in x.terms() {
        for (b, cb) in y.terms() {
            let g = a.add(b);
            let c = ca * cb;
            if g.order() > n {
                dropped += g.factorial_f64() * c * c;
                continue;
            }
            out.add_term(g, c, Overflow::Strict)?;
        }
    }
    if dropped > 0.0 {
        if mode == Overflow::Strict {
            let worst = first_overflow(x, y, n);
            return Err(ChaosError::OrderOverflow { alpha: worst, cap: n, dropped });
        }
        out.add_clipped(dropped);
    }
    out.add_clipped(x.clipped_mass() + y.clipped_mass());
    Ok(out)
}

fn first_overflow(x: &HermiteChaos, y: &HermiteChaos, n: usize) -> MultiIndex {
    for (a, ca) in x.terms() {
        for (b, cb) in y.terms() {
            if ca * cb != 0.0 && a.order() + b.order() > n {
                return a.add(b);
            }
        }
    }
    MultiIndex::zero()
}

/// `X^{⋄n}`, with `X^{⋄0} = 1`.
pub fn wick_power(x: &HermiteChaos, n: usize) -> Result<HermiteChaos> {
    wick_power_with(x, n, x.truncation().n, Overflow::Strict)
}

pub fn wick_power_with(x: &HermiteChaos, n: usize, cap: usize, mode: Overflow) -> Result<HermiteChaos> {
    let mut acc = HermiteChaos::constant(Truncation::new(x.truncation().k, cap.max(1)), 1.0);
    for _ in 0..n {
        acc = wick_product_with(&acc, x, cap, mode)?;
    }
    Ok(acc)
}

/// `exp^⋄ X ≈ e^{c} Σ_{n ≤ terms} (X − c)^{⋄n} / n!`, `c = E[X]`.
///
/// Orders above `N_X` are dropped (an exponential leaves every finite
/// truncation); their mass is recorded in `clipped_mass`.
pub fn wick_exp(x: &HermiteChaos, terms: usize) -> Result<HermiteChaos> {
    if terms == 0 {
        return Err(ChaosError::InvalidArgument("wick_exp needs at least one term".into()));
    }
    let tr = x.truncation();
    let c = x.expectation();
    let mut centred = x.clone();
    centred.set(MultiIndex::zero(), 0.0)?;
    let mut out = HermiteChaos::constant(tr, 1.0);
    let mut power = HermiteChaos::constant(tr, 1.0);
    for n in 1..=terms {
        power = wick_product_with(&power, &centred, tr.n, Overflow::Lenient)?;
        out = out.axpby(1.0, &power, 1.0 / factorial(n));
    }
    Ok(out.scale(c.exp()))
}

/// `‖X − E X‖₀^{n} / n!`: size of the first omitted exponential term.
pub fn wick_exp_tail_bound(x: &HermiteChaos, terms: usize) -> f64 {
    let mut centred = x.clone();
    let _ = centred.set(MultiIndex::zero(), 0.0);
    let norm = centred.hida_norm(0.0);
    let n = terms + 1;
    (n as f64 * norm.ln() - ln_factorial(n)).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tr() -> Truncation {
        Truncation::new(5, 4)
    }

    #[test]
    fn unit_indices_add() {
        let a = HermiteChaos::monomial(tr(), MultiIndex::unit(2), 1.0).unwrap();
        let b = HermiteChaos::monomial(tr(), MultiIndex::unit(4), 1.0).unwrap();
        let p = wick_product(&a, &b).unwrap();
        assert_eq!(p.coeff(&MultiIndex::new(vec![0, 1, 0, 1])), 1.0);
        assert_eq!(p.n_terms(), 1);
    }

    #[test]
    fn strict_overflow_reports_mass() {
        let a = HermiteChaos::monomial(tr(), MultiIndex::new(vec![3]), 2.0).unwrap();
        match wick_product(&a, &a) {
            Err(ChaosError::OrderOverflow { cap, dropped, .. }) => {
                assert_eq!(cap, 4);
                assert!((dropped - 720.0 * 16.0).abs() < 1e-9);
            }
            other => panic!("expected overflow, got {other:?}"),
        }
        let lenient = wick_product_with(&a, &a, 4, Overflow::Lenient).unwrap();
        assert_eq!(lenient.n_terms(), 0);
        assert!(lenient.clipped_mass() > 0.0);
    }

    #[test]
    fn power_zero_is_one() {
        let a = HermiteChaos::monomial(tr(), MultiIndex::unit(1), 0.3).unwrap();
        let p = wick_power(&a, 0).unwrap();
        assert_eq!(p.expectation(), 1.0);
        assert_eq!(p.n_terms(), 1);
    }

    #[test]
    fn exp_of_constant() {
        let c = HermiteChaos::constant(tr(), 0.7);
        let e = wick_exp(&c, 12).unwrap();
        assert!((e.expectation() - 0.7f64.exp()).abs() < 1e-15);
        assert_eq!(e.n_terms(), 1);
    }

    #[test]
    fn exp_coefficients_of_unit() {
        // exp^⋄(θ_1) = Σ H_{(n)} / n!
        let x = HermiteChaos::monomial(tr(), MultiIndex::unit(1), 1.0).unwrap();
        let e = wick_exp(&x, 12).unwrap();
        for n in 0..=4u32 {
            let want = 1.0 / factorial(n as usize);
            assert!((e.coeff(&MultiIndex::new(vec![n])) - want).abs() < 1e-15);
        }
        assert!(e.clipped_mass() > 0.0);
        assert!(wick_exp_tail_bound(&x, 12) < 1e-9);
    }
}

//! Hermite-function basis sampled on a time grid.

use serde::{Deserialize, Serialize};

use super::hermite::{gauss_hermite, gauss_legendre_on, hermite_functions, hermite_functions_unweighted};
use super::quadrature::{PairingLayout, TimeGrid};
use crate::error::{ChaosError, Result};

const CELL_GAUSS: usize = 20;

/// Provenance of a basis, written next to every artifact that uses one.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BasisMetadata {
    pub k: usize,
    pub grid: TimeGrid,
    pub line_scheme: String,
    pub line_cutoff: f64,
    pub tail_bound: f64,
    pub time_scheme: String,
}

/// `e_1..e_K` on a grid together with `E_k(t_i) = ∫_0^{t_i} e_k`.
#[derive(Clone, Debug)]
pub struct HermiteBasis {
    k: usize,
    grid: TimeGrid,
    /// `values[k-1][i] = e_k(t_i)`
    values: Vec<Vec<f64>>,
    /// `cumulative[k-1][i] = E_k(t_i)`
    cumulative: Vec<Vec<f64>>,
    /// `pairing[k-1][i]`: `∫_0^T f e_k ≈ Σ_i pairing[k-1][i] f(t_i)`
    pairing: Vec<Vec<f64>>,
    line_cutoff: f64,
}

impl HermiteBasis {
    pub fn new(k: usize, grid: TimeGrid) -> Result<Self> {
        if k == 0 {
            return Err(ChaosError::InvalidArgument("basis needs K >= 1".into()));
        }
        let m = grid.steps;
        let mut values = vec![vec![0.0; m + 1]; k];
        let mut buf = Vec::with_capacity(k);
        for i in 0..=m {
            hermite_functions(k, grid.t(i), &mut buf);
            for j in 0..k {
                values[j][i] = buf[j];
            }
        }
        // E_k by Gauss–Legendre per cell, accumulated
        let mut cumulative = vec![vec![0.0; m + 1]; k];
        let layout = PairingLayout::new(&grid);
        let mut pairing = vec![vec![0.0; m + 1]; k];
        for cell in 0..m {
            let (x, w) = gauss_legendre_on(CELL_GAUSS, grid.t(cell), grid.t(cell + 1));
            let mut acc = vec![0.0; k];
            for (xi, wi) in x.iter().zip(&w) {
                hermite_functions(k, *xi, &mut buf);
                for j in 0..k {
                    acc[j] += wi * buf[j];
                }
            }
            for j in 0..k {
                cumulative[j][cell + 1] = cumulative[j][cell] + acc[j];
            }
            for (q, &s) in layout.nodes[cell].iter().enumerate() {
                hermite_functions(k, s, &mut buf);
                for j in 0..k {
                    let gs = buf[j] * layout.gw[q];
                    for (l, lv) in layout.lagrange[cell][q].iter().enumerate() {
                        pairing[j][layout.start[cell] + l] += gs * lv;
                    }
                }
            }
        }
        let line_cutoff = (2.0 * k as f64).sqrt() + 9.0;
        Ok(Self { k, grid, values, cumulative, pairing, line_cutoff })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// `e_k(t_i)`, 1-based `k`.
    pub fn e(&self, k: usize, i: usize) -> f64 {
        self.values[k - 1][i]
    }

    /// `E_k(t_i)`, 1-based `k`.
    pub fn big_e(&self, k: usize, i: usize) -> f64 {
        self.cumulative[k - 1][i]
    }

    pub fn e_row(&self, k: usize) -> &[f64] {
        &self.values[k - 1]
    }

    pub fn big_e_row(&self, k: usize) -> &[f64] {
        &self.cumulative[k - 1]
    }

    /// `E_k(t)` at an arbitrary `t ∈ [0, T]`.
    pub fn big_e_at(&self, k: usize, t: f64) -> f64 {
        let cell = self.grid.cell_of(t);
        let a = self.grid.t(cell);
        if (t - a).abs() < 1e-15 {
            return self.cumulative[k - 1][cell];
        }
        let (x, w) = gauss_legendre_on(CELL_GAUSS, a, t);
        let mut buf = Vec::with_capacity(k);
        let mut s = 0.0;
        for (xi, wi) in x.iter().zip(&w) {
            hermite_functions(k, *xi, &mut buf);
            s += wi * buf[k - 1];
        }
        self.cumulative[k - 1][cell] + s
    }

    /// `∫_0^T f(t) e_k(t) dt` for a grid function `f`.
    pub fn pair(&self, f: &[f64], k: usize) -> f64 {
        self.pairing[k - 1].iter().zip(f).map(|(w, v)| w * v).sum()
    }

    pub fn pairing_row(&self, k: usize) -> &[f64] {
        &self.pairing[k - 1]
    }

    /// Coefficients `(f, e_k)_{L²[0,T]}`, `k = 1..K`.
    pub fn project(&self, f: &[f64]) -> Vec<f64> {
        (1..=self.k).map(|k| self.pair(f, k)).collect()
    }

    /// `Σ_k c_k e_k(t_i)` on the grid.
    pub fn synthesize(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.len()];
        for (j, c) in coeffs.iter().enumerate().take(self.k) {
            for (o, e) in out.iter_mut().zip(&self.values[j]) {
                *o += c * e;
            }
        }
        out
    }

    /// `(P_K χ_{[0,t_j]})(t_i) = Σ_k E_k(t_j) e_k(t_i)`.
    pub fn projected_indicator(&self, j: usize) -> Vec<f64> {
        let c: Vec<f64> = (1..=self.k).map(|k| self.big_e(k, j)).collect();
        self.synthesize(&c)
    }

    /// `t_i − Σ_k E_k(t_i)²`: the Parseval gap of `χ_{[0,t_i]}`.
    pub fn tail_variance(&self, i: usize) -> f64 {
        let s: f64 = (1..=self.k).map(|k| self.big_e(k, i).powi(2)).sum();
        (self.grid.t(i) - s).max(0.0)
    }

    pub fn max_tail_variance(&self) -> f64 {
        (0..self.grid.len()).map(|i| self.tail_variance(i)).fold(0.0, f64::max)
    }

    /// Whole-line `(f, e_k)` by composite Gauss–Legendre on `[−L, L]`.
    pub fn line_inner(&self, f: impl Fn(f64) -> f64, k: usize) -> f64 {
        let l = self.line_cutoff;
        let panels = (4.0 * l).ceil() as usize;
        let mut s = 0.0;
        let mut buf = Vec::with_capacity(k);
        for p in 0..panels {
            let a = -l + 2.0 * l * p as f64 / panels as f64;
            let b = -l + 2.0 * l * (p + 1) as f64 / panels as f64;
            let (x, w) = gauss_legendre_on(16, a, b);
            for (xi, wi) in x.iter().zip(&w) {
                hermite_functions(k, *xi, &mut buf);
                s += wi * f(*xi) * buf[k - 1];
            }
        }
        s
    }

    /// Largest deviation of the Gauss–Hermite Gram matrix from the identity.
    pub fn orthonormality_defect(&self) -> f64 {
        let n = self.k + 8;
        let (x, w) = gauss_hermite(n);
        let k = self.k;
        let mut g = vec![0.0; k * k];
        let mut buf = Vec::with_capacity(k);
        for (xi, wi) in x.iter().zip(&w) {
            hermite_functions_unweighted(k, *xi, &mut buf);
            for a in 0..k {
                for b in 0..k {
                    g[a * k + b] += wi * buf[a] * buf[b];
                }
            }
        }
        let mut worst: f64 = 0.0;
        for a in 0..k {
            for b in 0..k {
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((g[a * k + b] - target).abs());
            }
        }
        worst
    }

    /// Largest `|e_k(t_i)|` over the grid.
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn metadata(&self) -> BasisMetadata {
        BasisMetadata {
            k: self.k,
            grid: self.grid,
            line_scheme: format!("Gauss-Hermite ({} nodes) / composite Gauss-Legendre on [-L, L]", self.k + 8),
            line_cutoff: self.line_cutoff,
            tail_bound: self.max_tail_variance(),
            time_scheme: format!(
                "end-corrected trapezoid (6 corrections); pairing by degree-{} local interpolation",
                super::quadrature::PAIRING_DEGREE
            ),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn basis(k: usize, m: usize) -> HermiteBasis {
        HermiteBasis::new(k, TimeGrid::new(1.0, m).unwrap()).unwrap()
    }

    #[test]
    fn cumulative_starts_at_zero_and_matches_derivative() {
        let b = basis(30, 64);
        let h = b.grid().dt();
        for k in 1..=30 {
            assert_eq!(b.big_e(k, 0), 0.0);
            // centred difference of E_k against e_k
            for i in 1..64 {
                let d = (b.big_e(k, i + 1) - b.big_e(k, i - 1)) / (2.0 * h);
                assert!((d - b.e(k, i)).abs() < 5e-3);
            }
        }
    }

    #[test]
    fn gram_is_identity() {
        assert!(basis(20, 16).orthonormality_defect() < 1e-10);
    }

    #[test]
    fn pairing_with_unit_gives_cumulative() {
        let b = basis(30, 64);
        let one = vec![1.0; 65];
        for k in 1..=30 {
            assert!((b.pair(&one, k) - b.big_e(k, 64)).abs() < 1e-13);
        }
    }

    #[test]
    fn big_e_at_interpolates_grid_values() {
        let b = basis(10, 32);
        for k in 1..=10 {
            assert!((b.big_e_at(k, b.grid().t(7)) - b.big_e(k, 7)).abs() < 1e-15);
            let mid = 0.5 * (b.grid().t(7) + b.grid().t(8));
            let v = b.big_e_at(k, mid);
            assert!(v > b.big_e(k, 7).min(b.big_e(k, 8)) - 1e-3);
        }
    }

    #[test]
    fn line_inner_recovers_basis_coefficients() {
        let b = basis(12, 8);
        let f = |x: f64| {
            super::super::hermite::hermite_function(3, x) - 0.5 * super::super::hermite::hermite_function(7, x)
        };
        assert!((b.line_inner(f, 3) - 1.0).abs() < 1e-12);
        assert!((b.line_inner(f, 7) + 0.5).abs() < 1e-12);
        assert!(b.line_inner(f, 5).abs() < 1e-12);
    }
}

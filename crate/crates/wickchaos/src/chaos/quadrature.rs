//! Uniform time grids and the quadrature rules used for grid functions.
//!
//! Plain integrals `∫ f dt` use an end-corrected trapezoid rule (Gregory type)
//! with six correction weights per end. Pairings `∫ f(s) g(s) ds` against a
//! known function `g` (a Hermite function, say) use piecewise local Lagrange
//! interpolation of `f` and Gauss–Legendre in each cell, so only `f` is
//! approximated.

use serde::{Deserialize, Serialize};

use super::hermite::gauss_legendre;
use crate::error::{ChaosError, Result};

/// Uniform grid `t_i = i T / M`, `i = 0..=M`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub horizon: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(ChaosError::InvalidArgument(format!("horizon must be positive, got {horizon}")));
        }
        if steps < 2 {
            return Err(ChaosError::InvalidArgument(format!("grid needs M >= 2, got {steps}")));
        }
        Ok(Self { horizon, steps })
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn t(&self, i: usize) -> f64 {
        if i == self.steps {
            self.horizon
        } else {
            i as f64 * self.dt()
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..=self.steps).map(|i| self.t(i)).collect()
    }

    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Index of a grid point, if `t` lies on the grid (relative tolerance 1e−9).
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let x = t / self.dt();
        let i = x.round();
        if (x - i).abs() < 1e-9 && i >= 0.0 && i as usize <= self.steps {
            Some(i as usize)
        } else {
            None
        }
    }

    /// Cell containing `t` (cells are `[t_i, t_{i+1})`, the last one closed).
    pub fn cell_of(&self, t: f64) -> usize {
        let i = (t / self.dt()).floor();
        (i.max(0.0) as usize).min(self.steps - 1)
    }

    pub fn integrate(&self, f: &[f64]) -> f64 {
        integrate_uniform(f, self.dt())
    }

    /// `∫_{t_a}^{t_b} f`, with `f` indexed on the full grid.
    pub fn integrate_range(&self, f: &[f64], a: usize, b: usize) -> f64 {
        if b <= a {
            return 0.0;
        }
        integrate_uniform(&f[a..=b], self.dt())
    }

    /// Running integrals `∫_0^{t_i} f` for every grid point.
    pub fn cumulative(&self, f: &[f64]) -> Vec<f64> {
        (0..=self.steps).map(|i| self.integrate_range(f, 0, i)).collect()
    }

    /// Tail integrals `∫_{t_i}^T f` for every grid point.
    pub fn tail(&self, f: &[f64]) -> Vec<f64> {
        (0..=self.steps).map(|i| self.integrate_range(f, i, self.steps)).collect()
    }
}

/// Correction coefficients added to the unit weights at each end.
///
/// Exact for polynomials of degree < 6 in the local coordinate; derived from
/// the Euler–Maclaurin end terms.
const GREGORY6: [f64; 6] = [
    -0.684_408_068_783_068_8,
    0.392_179_232_804_232_8,
    -0.376_025_132_275_132_3,
    0.244_080_687_830_687_84,
    -0.090_095_899_470_899_47,
    0.014_269_179_894_179_895,
];

/// Weights of the end-corrected rule on `n` intervals of width `h`.
pub fn quadrature_weights(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![h; n + 1];
    if n == 0 {
        return vec![0.0];
    }
    let m = correction_order(n);
    let c = end_corrections(m);
    for (i, ci) in c.iter().enumerate() {
        w[i] += h * ci;
        w[n - i] += h * ci;
    }
    w
}

fn correction_order(n: usize) -> usize {
    // six corrections need n ≥ 11 to keep each end's stencil separate
    if n >= 11 {
        6
    } else {
        ((n + 1) / 2).max(1)
    }
}

fn end_corrections(m: usize) -> Vec<f64> {
    if m == 6 {
        return GREGORY6.to_vec();
    }
    // Σ_i c_i i^j = −δ_{j0}/2 + [j odd] B_{j+1}/(j+1), j < m
    const BERN: [f64; 6] = [1.0 / 6.0, -1.0 / 30.0, 1.0 / 42.0, -1.0 / 30.0, 5.0 / 66.0, -691.0 / 2730.0];
    let mut a = nalgebra::DMatrix::<f64>::zeros(m, m);
    let mut b = nalgebra::DVector::<f64>::zeros(m);
    for j in 0..m {
        for i in 0..m {
            a[(j, i)] = (i as f64).powi(j as i32);
        }
        if j == 0 {
            a[(0, 0)] = 1.0;
            b[0] = -0.5;
        } else if j % 2 == 1 {
            b[j] = BERN[(j - 1) / 2] / (j as f64 + 1.0);
        }
    }
    a.lu().solve(&b).expect("Vandermonde system is regular").iter().copied().collect()
}

pub fn integrate_uniform(f: &[f64], h: f64) -> f64 {
    if f.len() < 2 {
        return 0.0;
    }
    let w = quadrature_weights(f.len() - 1, h);
    w.iter().zip(f).map(|(w, f)| w * f).sum()
}

/// Local interpolation degree for pairing weights.
pub const PAIRING_DEGREE: usize = 9;
const PAIRING_GAUSS: usize = 12;

/// Pairing weights `W_i = ∫_0^T g(s) L_i(s) ds`, where `L_i` are the cardinal
/// functions of piecewise degree-`PAIRING_DEGREE` interpolation on the grid.
///
/// Then `∫_0^T f g ≈ Σ_i W_i f(t_i)` for any grid function `f`.
pub fn pairing_weights<G: Fn(f64) -> f64>(grid: &TimeGrid, g: G) -> Vec<f64> {
    let mut w = vec![0.0; grid.len()];
    let layout = PairingLayout::new(grid);
    for cell in 0..grid.steps {
        for (q, &s) in layout.nodes[cell].iter().enumerate() {
            let gs = g(s) * layout.gw[q];
            for (j, l) in layout.lagrange[cell][q].iter().enumerate() {
                w[layout.start[cell] + j] += gs * l;
            }
        }
    }
    w
}

/// Precomputed interpolation stencils for pairing integrals.
#[derive(Clone, Debug)]
pub struct PairingLayout {
    pub start: Vec<usize>,
    pub nodes: Vec<Vec<f64>>,
    pub gw: Vec<f64>,
    pub lagrange: Vec<Vec<Vec<f64>>>,
}

impl PairingLayout {
    pub fn new(grid: &TimeGrid) -> Self {
        let m = grid.steps;
        let p = PAIRING_DEGREE.min(m);
        let (gx, gw0) = gauss_legendre(PAIRING_GAUSS);
        let h = grid.dt();
        let gw: Vec<f64> = gw0.iter().map(|w| 0.5 * h * w).collect();
        let mut start = Vec::with_capacity(m);
        let mut nodes = Vec::with_capacity(m);
        let mut lagrange = Vec::with_capacity(m);
        for cell in 0..m {
            let s0 = (cell as isize - (p as isize - 1) / 2).clamp(0, (m - p) as isize) as usize;
            start.push(s0);
            let a = grid.t(cell);
            let mut cn = Vec::with_capacity(PAIRING_GAUSS);
            let mut cl = Vec::with_capacity(PAIRING_GAUSS);
            for &x in &gx {
                let s = a + 0.5 * h * (x + 1.0);
                cn.push(s);
                // local coordinate u = s/h − s0, stencil nodes at 0..=p
                let u = s / h - s0 as f64;
                let mut l = vec![1.0; p + 1];
                for (j, lj) in l.iter_mut().enumerate() {
                    for k in 0..=p {
                        if k != j {
                            *lj *= (u - k as f64) / (j as f64 - k as f64);
                        }
                    }
                }
                cl.push(l);
            }
            nodes.push(cn);
            lagrange.push(cl);
        }
        Self { start, nodes, gw, lagrange }
    }
}

/// Chebyshev–Lobatto nodes on `[a, b]`, ascending.
pub fn chebyshev_nodes(n: usize, a: f64, b: f64) -> Vec<f64> {
    (0..n)
        .map(|j| {
            let x = -(std::f64::consts::PI * j as f64 / (n - 1) as f64).cos();
            0.5 * (a + b) + 0.5 * (b - a) * x
        })
        .collect()
}

/// Barycentric interpolant through Chebyshev–Lobatto data on `[a, b]`.
#[derive(Clone, Debug)]
pub struct Chebyshev {
    pub a: f64,
    pub b: f64,
    pub nodes: Vec<f64>,
    pub values: Vec<f64>,
}

impl Chebyshev {
    pub fn nodes_for(n: usize, a: f64, b: f64) -> Vec<f64> {
        chebyshev_nodes(n, a, b)
    }

    pub fn from_values(a: f64, b: f64, values: Vec<f64>) -> Self {
        let nodes = chebyshev_nodes(values.len(), a, b);
        Self { a, b, nodes, values }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.nodes.len();
        if n == 1 || (self.b - self.a).abs() < 1e-300 {
            return self.values[0];
        }
        let mut num = 0.0;
        let mut den = 0.0;
        for j in 0..n {
            let d = x - self.nodes[j];
            if d.abs() < 1e-15 * (1.0 + x.abs()) {
                return self.values[j];
            }
            let mut wj = if j % 2 == 0 { 1.0 } else { -1.0 };
            if j == 0 || j == n - 1 {
                wj *= 0.5;
            }
            let c = wj / d;
            num += c * self.values[j];
            den += c;
        }
        num / den
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corrections_match_table() {
        let c = {
            // recompute through the generic path
            let m = 6;
            const BERN: [f64; 3] = [1.0 / 6.0, -1.0 / 30.0, 1.0 / 42.0];
            let mut a = nalgebra::DMatrix::<f64>::zeros(m, m);
            let mut b = nalgebra::DVector::<f64>::zeros(m);
            for j in 0..m {
                for i in 0..m {
                    a[(j, i)] = if j == 0 { 1.0 } else { (i as f64).powi(j as i32) };
                }
                if j == 0 {
                    b[0] = -0.5;
                } else if j % 2 == 1 {
                    b[j] = BERN[(j - 1) / 2] / (j as f64 + 1.0);
                }
            }
            a.lu().solve(&b).unwrap()
        };
        for i in 0..6 {
            assert!((c[i] - GREGORY6[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn high_order_on_smooth_integrand() {
        let g = TimeGrid::new(1.0, 64).unwrap();
        let f: Vec<f64> = g.points().iter().map(|t| (3.0 * t).sin().exp()).collect();
        // reference by 64-point Gauss–Legendre on 8 panels
        let mut exact = 0.0;
        for p in 0..8 {
            let (x, w) = super::super::hermite::gauss_legendre_on(32, p as f64 / 8.0, (p + 1) as f64 / 8.0);
            exact += x.iter().zip(&w).map(|(x, w)| w * (3.0 * x).sin().exp()).sum::<f64>();
        }
        assert!((g.integrate(&f) - exact).abs() < 1e-9);
    }

    #[test]
    fn short_ranges_are_exact_for_low_degree() {
        let g = TimeGrid::new(1.0, 64).unwrap();
        let f: Vec<f64> = g.points().iter().map(|t| 2.0 * t + 1.0).collect();
        for (a, b) in [(3, 4), (10, 13), (0, 7), (5, 64)] {
            let (ta, tb) = (g.t(a), g.t(b));
            let exact = tb * tb + tb - ta * ta - ta;
            assert!((g.integrate_range(&f, a, b) - exact).abs() < 1e-13);
        }
    }

    #[test]
    fn pairing_weights_reproduce_polynomial_products() {
        let g = TimeGrid::new(1.0, 40).unwrap();
        let w = pairing_weights(&g, |s| s.cos());
        let f: Vec<f64> = g.points().iter().map(|t| t * t).collect();
        let approx: f64 = w.iter().zip(&f).map(|(a, b)| a * b).sum();
        // ∫_0^1 s² cos s ds = 2cos1 − sin1
        let exact = 2.0 * 1f64.cos() - 1f64.sin();
        assert!((approx - exact).abs() < 1e-13);
    }

    #[test]
    fn chebyshev_interpolates_smooth_functions() {
        let nodes = Chebyshev::nodes_for(24, 0.3, 2.0);
        let c = Chebyshev::from_values(0.3, 2.0, nodes.iter().map(|x| (-x).exp()).collect());
        for x in [0.3, 0.77, 1.5, 2.0] {
            assert!((c.eval(x) - (-x as f64).exp()).abs() < 1e-13);
        }
    }
}

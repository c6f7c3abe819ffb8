//! Iterated-integral representation `F = Σ_n I_n(f_n)` on a time grid.
//!
//! Kernels are sampled at the grid points and stored once per sorted index
//! tuple. Continuum quantities (norms, contractions, projections onto the
//! Hermite basis) use the grid quadrature. Pathwise values use the discrete
//! multiple integral over cells with left-point kernel values,
//!
//! `I_n(f) = n! Σ_{i_1 < … < i_n} f(t_{i_1}, …, t_{i_n}) ΔB_{i_1} ⋯ ΔB_{i_n}`,
//!
//! which has mean zero and satisfies Clark–Ocone exactly on the grid.

use super::basis::HermiteBasis;
use super::hermite_chaos::{HermiteChaos, Overflow, Truncation};
use super::multi_index::{factorial_f64, MultiIndex};
use super::quadrature::{quadrature_weights, TimeGrid};
use crate::error::{ChaosError, Result};

/// Colex ranking of sorted tuples over `p` points.
#[derive(Clone, Debug)]
pub struct SymIndex {
    pub points: usize,
    pub order: usize,
    binom: Vec<Vec<usize>>,
}

impl SymIndex {
    pub fn new(points: usize, order: usize) -> Self {
        let top = points + order + 1;
        let mut binom = vec![vec![0usize; order + 2]; top];
        for row in binom.iter_mut() {
            row[0] = 1;
        }
        for n in 1..top {
            for k in 1..=order + 1 {
                binom[n][k] = binom[n - 1][k - 1] + binom[n - 1][k];
            }
        }
        Self { points, order, binom }
    }

    /// Number of sorted tuples, `C(p + n − 1, n)`.
    pub fn size(&self) -> usize {
        if self.order == 0 {
            return 1;
        }
        self.binom[self.points + self.order - 1][self.order]
    }

    /// Rank of an ascending tuple.
    pub fn rank_sorted(&self, idx: &[usize]) -> usize {
        idx.iter().enumerate().map(|(k, &i)| self.binom[i + k][k + 1]).sum()
    }

    /// Rank of an arbitrary tuple (sorted internally).
    pub fn rank(&self, idx: &[usize]) -> usize {
        let mut s = [0usize; 16];
        let n = idx.len();
        s[..n].copy_from_slice(idx);
        s[..n].sort_unstable();
        self.rank_sorted(&s[..n])
    }

    /// Visits every ascending tuple with entries in `0..points`.
    pub fn for_each_sorted(&self, mut f: impl FnMut(&[usize])) {
        let n = self.order;
        if n == 0 {
            f(&[]);
            return;
        }
        let mut idx = vec![0usize; n];
        loop {
            f(&idx);
            // next non-decreasing tuple in lexicographic order
            let mut k = n;
            loop {
                if k == 0 {
                    return;
                }
                k -= 1;
                if idx[k] + 1 < self.points {
                    let v = idx[k] + 1;
                    for slot in idx.iter_mut().skip(k) {
                        *slot = v;
                    }
                    break;
                }
            }
        }
    }
}

/// `F = f_0 + Σ_{n=1}^{N_k} I_n(f_n)` with symmetric kernels on the grid.
#[derive(Clone, Debug)]
pub struct KernelChaos {
    grid: TimeGrid,
    max_order: usize,
    kernels: Vec<Vec<f64>>,
    index: Vec<SymIndex>,
}

impl KernelChaos {
    pub fn zero(grid: TimeGrid, max_order: usize) -> Self {
        let p = grid.len();
        let index: Vec<SymIndex> = (0..=max_order).map(|n| SymIndex::new(p, n)).collect();
        let kernels = index.iter().map(|s| vec![0.0; s.size()]).collect();
        Self { grid, max_order, kernels, index }
    }

    pub fn constant(grid: TimeGrid, max_order: usize, c: f64) -> Self {
        let mut out = Self::zero(grid, max_order);
        out.kernels[0][0] = c;
        out
    }

    /// Sets `f_n(t_{i_1}, …, t_{i_n}) = f(t_{i_1}, …, t_{i_n})`; `f` must be symmetric.
    pub fn with_kernel(mut self, n: usize, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        self.check_order(n)?;
        let pts = self.grid.points();
        let mut buf = vec![0.0; n];
        let mut vals = vec![0.0; self.index[n].size()];
        let sym = &self.index[n];
        sym.for_each_sorted(|idx| {
            for (b, &i) in buf.iter_mut().zip(idx) {
                *b = pts[i];
            }
            vals[sym.rank_sorted(idx)] = f(&buf);
        });
        self.kernels[n] = vals;
        Ok(self)
    }

    /// Sets `f_n = c · Sym(g_1 ⊗ … ⊗ g_n)` for grid functions `g_l`.
    pub fn with_product_kernel(mut self, c: f64, factors: &[&[f64]]) -> Result<Self> {
        let n = factors.len();
        self.check_order(n)?;
        let sym = &self.index[n];
        let mut vals = vec![0.0; sym.size()];
        let perms = permutations(n);
        let inv = 1.0 / perms.len() as f64;
        sym.for_each_sorted(|idx| {
            let mut s = 0.0;
            for p in &perms {
                let mut prod = 1.0;
                for (l, &pi) in p.iter().enumerate() {
                    prod *= factors[l][idx[pi]];
                }
                s += prod;
            }
            vals[sym.rank_sorted(idx)] = c * s * inv;
        });
        for (a, b) in self.kernels[n].iter_mut().zip(vals) {
            *a += b;
        }
        Ok(self)
    }

    fn check_order(&self, n: usize) -> Result<()> {
        if n > self.max_order {
            return Err(ChaosError::OrderOverflow {
                alpha: MultiIndex::new(vec![n as u32]),
                cap: self.max_order,
                dropped: 0.0,
            });
        }
        Ok(())
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    pub fn f0(&self) -> f64 {
        self.kernels[0][0]
    }

    pub fn set_f0(&mut self, c: f64) {
        self.kernels[0][0] = c;
    }

    /// `f_n` at grid indices, in any order.
    pub fn get(&self, idx: &[usize]) -> f64 {
        let n = idx.len();
        if n > self.max_order {
            return 0.0;
        }
        self.kernels[n][self.index[n].rank(idx)]
    }

    /// Replaces `f_n` by values in sorted-tuple rank order.
    pub fn set_sorted(&mut self, n: usize, vals: Vec<f64>) -> Result<()> {
        self.check_order(n)?;
        if vals.len() != self.index[n].size() {
            return Err(ChaosError::InvalidArgument("kernel length does not match the order".into()));
        }
        self.kernels[n] = vals;
        Ok(())
    }

    pub fn sorted_values(&self, n: usize) -> &[f64] {
        &self.kernels[n]
    }

    pub fn sym_index(&self, n: usize) -> &SymIndex {
        &self.index[n]
    }

    /// Highest order with a non-zero kernel.
    pub fn effective_order(&self) -> usize {
        (0..=self.max_order).rev().find(|&n| self.kernels[n].iter().any(|v| *v != 0.0)).unwrap_or(0)
    }

    pub fn expectation(&self) -> f64 {
        self.f0()
    }

    /// Raises the storage order cap (new kernels are zero).
    pub fn with_max_order(&self, max_order: usize) -> Self {
        let mut out = Self::zero(self.grid, max_order);
        for n in 0..=self.max_order.min(max_order) {
            out.kernels[n] = self.kernels[n].clone();
        }
        out
    }

    pub fn axpby(&self, a: f64, other: &KernelChaos, b: f64) -> Result<Self> {
        if self.grid != other.grid {
            return Err(ChaosError::InvalidArgument("kernel chaos on different grids".into()));
        }
        let mut out = Self::zero(self.grid, self.max_order.max(other.max_order));
        for n in 0..=out.max_order {
            for (i, slot) in out.kernels[n].iter_mut().enumerate() {
                let x = if n <= self.max_order { self.kernels[n][i] } else { 0.0 };
                let y = if n <= other.max_order { other.kernels[n][i] } else { 0.0 };
                *slot = a * x + b * y;
            }
        }
        Ok(out)
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = self.clone();
        for k in &mut out.kernels {
            for v in k.iter_mut() {
                *v *= s;
            }
        }
        out
    }

    /// Largest kernel-value difference.
    pub fn max_abs_diff(&self, other: &KernelChaos) -> f64 {
        let top = self.max_order.max(other.max_order);
        let mut m: f64 = 0.0;
        for n in 0..=top {
            let len = self.index.get(n).or(other.index.get(n)).map(|s| s.size()).unwrap_or(0);
            for i in 0..len {
                let x = if n <= self.max_order { self.kernels[n][i] } else { 0.0 };
                let y = if n <= other.max_order { other.kernels[n][i] } else { 0.0 };
                m = m.max((x - y).abs());
            }
        }
        m
    }

    /// Dense array of `f_n` over all `P^n` index tuples (row-major).
    pub fn dense(&self, n: usize) -> Vec<f64> {
        let p = self.grid.len();
        let total = p.pow(n as u32);
        let mut out = vec![0.0; total];
        let mut idx = vec![0usize; n];
        for (flat, slot) in out.iter_mut().enumerate() {
            let mut r = flat;
            for k in (0..n).rev() {
                idx[k] = r % p;
                r /= p;
            }
            *slot = self.get(&idx);
        }
        out
    }

    fn set_from_dense_symmetrized(&mut self, n: usize, dense: &[f64]) {
        let p = self.grid.len();
        let perms = permutations(n);
        let inv = 1.0 / perms.len() as f64;
        let sym = self.index[n].clone();
        let mut vals = vec![0.0; sym.size()];
        sym.for_each_sorted(|idx| {
            let mut s = 0.0;
            for perm in &perms {
                let mut flat = 0;
                for &pi in perm {
                    flat = flat * p + idx[pi];
                }
                s += dense[flat];
            }
            vals[sym.rank_sorted(idx)] = s * inv;
        });
        self.kernels[n] = vals;
    }

    /// `‖F‖² = Σ n! ‖f_n‖²_{L²([0,T]^n)}` by tensor quadrature.
    pub fn norm_sq(&self) -> f64 {
        let w = quadrature_weights(self.grid.steps, self.grid.dt());
        let mut total = self.f0() * self.f0();
        for n in 1..=self.max_order {
            if self.kernels[n].iter().all(|v| *v == 0.0) {
                continue;
            }
            let sym = &self.index[n];
            let mut s = 0.0;
            sym.for_each_sorted(|idx| {
                let v = self.kernels[n][sym.rank_sorted(idx)];
                if v != 0.0 {
                    let mult = distinct_permutations(idx);
                    let wprod: f64 = idx.iter().map(|&i| w[i]).product();
                    s += mult * wprod * v * v;
                }
            });
            total += factorial_f64(n) * s;
        }
        total
    }

    /// Pathwise value from the cell increments `ΔB_i = B(t_{i+1}) − B(t_i)`.
    pub fn evaluate_increments(&self, db: &[f64]) -> f64 {
        let mut total = self.f0();
        let mut idx = [0usize; 16];
        for n in 1..=self.max_order {
            let ker = &self.kernels[n];
            if ker.iter().all(|v| *v == 0.0) {
                continue;
            }
            let s = strict_sum(ker, &self.index[n], db, n, 0, 0, 1.0, &mut idx);
            total += factorial_f64(n) * s;
        }
        total
    }

    /// `D_{t_j} F = Σ n I_{n−1}(f_n(·, t_j))`.
    pub fn malliavin_kernel(&self, j: usize) -> KernelChaos {
        let top = self.max_order.saturating_sub(1);
        let mut out = KernelChaos::zero(self.grid, top);
        for n in 1..=self.max_order {
            let sym = out.index[n - 1].clone();
            let mut vals = vec![0.0; sym.size()];
            let mut full = vec![0usize; n];
            sym.for_each_sorted(|idx| {
                full[..n - 1].copy_from_slice(idx);
                full[n - 1] = j;
                vals[sym.rank_sorted(idx)] = n as f64 * self.get(&full);
            });
            out.kernels[n - 1] = vals;
        }
        out
    }

    /// `E[F | F_{t_j}]`: kernels restricted to cells before `j`; `j = M` is the identity.
    pub fn conditional_expectation(&self, j: usize) -> KernelChaos {
        if j >= self.grid.steps {
            return self.clone();
        }
        let mut out = self.clone();
        for n in 1..=self.max_order {
            let sym = &self.index[n];
            let ker = &mut out.kernels[n];
            sym.for_each_sorted(|idx| {
                if idx[n - 1] >= j {
                    ker[sym.rank_sorted(idx)] = 0.0;
                }
            });
        }
        out
    }

    /// Largest `|f_n|` outside `[0, t_j)^n` (adaptedness defect at `t_j`).
    pub fn support_defect(&self, j: usize) -> f64 {
        let mut m: f64 = 0.0;
        for n in 1..=self.max_order {
            let sym = &self.index[n];
            sym.for_each_sorted(|idx| {
                if idx[n - 1] >= j && idx.iter().all(|&i| i < self.grid.steps) {
                    m = m.max(self.kernels[n][sym.rank_sorted(idx)].abs());
                }
            });
        }
        m
    }
}

impl KernelChaos {
    /// Ordinary product by the contraction formula
    /// `I_p(f) I_q(g) = Σ_r r! C(p,r) C(q,r) I_{p+q−2r}(f ⊗_r g)`,
    /// contractions taken with the grid quadrature. Fails if the product
    /// needs an order above `cap`.
    pub fn product(&self, other: &KernelChaos, cap: usize) -> Result<KernelChaos> {
        if self.grid != other.grid {
            return Err(ChaosError::InvalidArgument("kernel chaos on different grids".into()));
        }
        let (ep, eq) = (self.effective_order(), other.effective_order());
        if ep + eq > cap {
            return Err(ChaosError::OrderOverflow {
                alpha: MultiIndex::new(vec![(ep + eq) as u32]),
                cap,
                dropped: f64::NAN,
            });
        }
        let p_pts = self.grid.len();
        let w = quadrature_weights(self.grid.steps, self.grid.dt());
        let mut out = KernelChaos::zero(self.grid, cap);
        for p in 0..=ep {
            let fd = self.dense(p);
            if fd.iter().all(|v| *v == 0.0) {
                continue;
            }
            for q in 0..=eq {
                let gd = other.dense(q);
                if gd.iter().all(|v| *v == 0.0) {
                    continue;
                }
                for r in 0..=p.min(q) {
                    let weight = factorial_f64(r) * binom_f64(p, r) * binom_f64(q, r);
                    let (a, b) = (p - r, q - r);
                    let ra = p_pts.pow(a as u32);
                    let rb = p_pts.pow(b as u32);
                    let inner = p_pts.pow(r as u32);
                    // quadrature weight of each contracted tuple
                    let wr: Vec<f64> = (0..inner)
                        .map(|mut u| {
                            let mut prod = 1.0;
                            for _ in 0..r {
                                prod *= w[u % p_pts];
                                u /= p_pts;
                            }
                            prod
                        })
                        .collect();
                    let mut h = vec![0.0; ra * rb];
                    for x in 0..ra {
                        let fr = &fd[x * inner..(x + 1) * inner];
                        for y in 0..rb {
                            let gr = &gd[y * inner..(y + 1) * inner];
                            let mut s = 0.0;
                            for u in 0..inner {
                                s += wr[u] * fr[u] * gr[u];
                            }
                            h[x * rb + y] = weight * s;
                        }
                    }
                    let n = a + b;
                    let mut tmp = KernelChaos::zero(self.grid, cap);
                    tmp.set_from_dense_symmetrized(n, &h);
                    for (o, v) in out.kernels[n].iter_mut().zip(&tmp.kernels[n]) {
                        *o += v;
                    }
                }
            }
        }
        Ok(out)
    }
}

pub(crate) fn binom_f64(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Smallest eigenvalue of the matrix `g(φ_j − φ_l)`, `g(φ) = exp(−½‖φ‖²)`,
/// for test functions sampled on `grid`.
pub fn gaussian_psd_check(grid: &TimeGrid, phis: &[Vec<f64>]) -> Result<f64> {
    if phis.is_empty() {
        return Err(ChaosError::InvalidArgument("need at least one test function".into()));
    }
    if phis.iter().any(|p| p.len() != grid.len()) {
        return Err(ChaosError::InvalidArgument("test functions must live on the grid".into()));
    }
    let n = phis.len();
    let mut m = nalgebra::DMatrix::<f64>::zeros(n, n);
    let mut diff = vec![0.0; grid.len()];
    for j in 0..n {
        for l in 0..=j {
            for (d, (a, b)) in diff.iter_mut().zip(phis[j].iter().zip(&phis[l])) {
                *d = (a - b) * (a - b);
            }
            let v = (-0.5 * grid.integrate(&diff)).exp();
            m[(j, l)] = v;
            m[(l, j)] = v;
        }
    }
    let eig = nalgebra::SymmetricEigen::new(m);
    Ok(eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min))
}

#[allow(clippy::too_many_arguments)]
fn strict_sum(
    ker: &[f64],
    sym: &SymIndex,
    db: &[f64],
    n: usize,
    depth: usize,
    start: usize,
    prod: f64,
    idx: &mut [usize; 16],
) -> f64 {
    let cells = db.len();
    let mut s = 0.0;
    if depth + 1 == n {
        for i in start..cells {
            idx[depth] = i;
            s += ker[sym.rank_sorted(&idx[..n])] * db[i];
        }
        return s * prod;
    }
    for i in start..cells.saturating_sub(n - depth - 1) {
        idx[depth] = i;
        s += strict_sum(ker, sym, db, n, depth + 1, i + 1, prod * db[i], idx);
    }
    s
}

/// Number of distinct orderings of a sorted tuple, `n! / Π m_v!`.
pub(crate) fn distinct_permutations(sorted: &[usize]) -> f64 {
    let n = sorted.len();
    let mut denom = 1.0;
    let mut run = 1usize;
    for k in 1..n {
        if sorted[k] == sorted[k - 1] {
            run += 1;
            denom *= run as f64;
        } else {
            run = 1;
        }
    }
    factorial_f64(n) / denom
}

pub(crate) fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..n).collect();
    heap_permute(n, &mut cur, &mut out);
    out
}

fn heap_permute(k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if k <= 1 {
        out.push(cur.clone());
        return;
    }
    for i in 0..k {
        heap_permute(k - 1, cur, out);
        if k % 2 == 0 {
            cur.swap(i, k - 1);
        } else {
            cur.swap(0, k - 1);
        }
    }
}

/// Report from [`kernel_to_hermite`].
#[derive(Clone, Debug)]
pub struct Projection {
    pub chaos: HermiteChaos,
    /// `‖f_n − Σ c_α Sym e^{⊗α}‖_{L²([0,T]^n)}` per order `n` (index 0 unused).
    pub residuals: Vec<f64>,
}

/// Expands each kernel in the Hermite-function tensor basis:
/// `c_α = (n!/α!) ∫ f_n e^{⊗α}` over `[0, T]^n`.
///
/// With `tol = Some(τ)`, an order whose projection residual exceeds `τ` is an error.
pub fn kernel_to_hermite(
    f: &KernelChaos,
    basis: &HermiteBasis,
    truncation: Truncation,
    tol: Option<f64>,
) -> Result<Projection> {
    if basis.grid() != f.grid() {
        return Err(ChaosError::InvalidArgument("basis and kernel grids differ".into()));
    }
    let k = basis.k().min(truncation.k);
    let p = f.grid().len();
    let mut chaos = HermiteChaos::zero(truncation);
    chaos.add_term(MultiIndex::zero(), f.f0(), Overflow::Strict)?;
    let mut residuals = vec![0.0; f.max_order() + 1];
    for n in 1..=f.max_order() {
        if f.kernels[n].iter().all(|v| *v == 0.0) {
            continue;
        }
        // contract the leading axis n times: [P][rest] → [rest][K]
        let mut cur = f.dense(n);
        for _ in 0..n {
            let rest = cur.len() / p;
            let mut next = vec![0.0; rest * k];
            for j in 0..k {
                let w = basis.pairing_row(j + 1);
                for (i, wi) in w.iter().enumerate() {
                    if *wi == 0.0 {
                        continue;
                    }
                    let row = &cur[i * rest..(i + 1) * rest];
                    for (r, v) in row.iter().enumerate() {
                        next[r * k + j] += wi * v;
                    }
                }
            }
            cur = next;
        }
        // cur is indexed by (j_1, …, j_n) row-major over K^n
        for alpha in MultiIndex::enumerate_order(k, n) {
            let labels = alpha.labels();
            let mut flat = 0;
            for &l in &labels {
                flat = flat * k + (l - 1);
            }
            let c = factorial_f64(n) / alpha.factorial_f64() * cur[flat];
            if c != 0.0 {
                chaos.add_term(alpha, c, Overflow::Strict)?;
            }
        }
        if let Some(tol) = tol {
            let proj = hermite_to_kernel(&chaos.homogeneous(n), basis, n)?;
            let diff = f.axpby(1.0, &proj, -1.0)?;
            let only_n = diff.restrict_to_order(n);
            let r = (only_n.norm_sq() / factorial_f64(n)).sqrt();
            residuals[n] = r;
            if r > tol {
                return Err(ChaosError::BasisInsufficient { order: n, residual: r, tol });
            }
        }
    }
    Ok(Projection { chaos, residuals })
}

impl KernelChaos {
    fn restrict_to_order(&self, n: usize) -> KernelChaos {
        let mut out = KernelChaos::zero(self.grid, self.max_order);
        out.kernels[n] = self.kernels[n].clone();
        out
    }
}

/// `f_n = Σ_{|α| = n} c_α Sym(e^{⊗α})` sampled on the grid.
pub fn hermite_to_kernel(f: &HermiteChaos, basis: &HermiteBasis, max_order: usize) -> Result<KernelChaos> {
    for (a, _) in f.terms() {
        if a.order() > max_order {
            return Err(ChaosError::OrderOverflow { alpha: a.clone(), cap: max_order, dropped: 0.0 });
        }
        if a.len() > basis.k() {
            return Err(ChaosError::VariableOverflow { alpha: a.clone(), k: basis.k() });
        }
    }
    let mut out = KernelChaos::zero(*basis.grid(), max_order);
    for (a, c) in f.terms() {
        let labels = a.labels();
        if labels.is_empty() {
            out.kernels[0][0] += c;
            continue;
        }
        let rows: Vec<&[f64]> = labels.iter().map(|&l| basis.e_row(l)).collect();
        out = out.with_product_kernel(*c, &rows)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(m: usize) -> TimeGrid {
        TimeGrid::new(1.0, m).unwrap()
    }

    #[test]
    fn ranks_are_a_bijection() {
        let s = SymIndex::new(7, 3);
        let mut seen = vec![false; s.size()];
        s.for_each_sorted(|idx| {
            let r = s.rank_sorted(idx);
            assert!(!seen[r]);
            seen[r] = true;
        });
        assert!(seen.iter().all(|b| *b));
        assert_eq!(s.size(), 84);
        assert_eq!(s.rank(&[3, 1, 2]), s.rank_sorted(&[1, 2, 3]));
    }

    #[test]
    fn distinct_permutation_counts() {
        assert_eq!(distinct_permutations(&[1, 2, 3]), 6.0);
        assert_eq!(distinct_permutations(&[1, 1, 3]), 3.0);
        assert_eq!(distinct_permutations(&[2, 2, 2]), 1.0);
    }

    #[test]
    fn second_order_brownian_square() {
        // I_2(1) = B(T)² − Σ ΔB_i²
        let g = grid(8);
        let f = KernelChaos::zero(g, 2).with_kernel(2, |_| 1.0).unwrap();
        let db = [0.3, -0.1, 0.2, 0.05, -0.4, 0.1, 0.0, 0.25];
        let b: f64 = db.iter().sum();
        let sq: f64 = db.iter().map(|x| x * x).sum();
        assert!((f.evaluate_increments(&db) - (b * b - sq)).abs() < 1e-14);
    }

    #[test]
    fn norm_of_indicator_square() {
        // ‖I_2(1)‖² = 2 T²
        let g = grid(10);
        let f = KernelChaos::zero(g, 2).with_kernel(2, |_| 1.0).unwrap();
        assert!((f.norm_sq() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn conditional_expectation_edges() {
        let g = grid(6);
        let f =
            KernelChaos::constant(g, 2, 0.7).with_kernel(1, |_| 1.0).unwrap().with_kernel(2, |t| t[0] + t[1]).unwrap();
        assert_eq!(f.conditional_expectation(6).max_abs_diff(&f), 0.0);
        let c0 = f.conditional_expectation(0);
        assert_eq!(c0.f0(), 0.7);
        assert_eq!(c0.effective_order(), 0);
        let db = [0.1, 0.2, -0.3, 0.4, 0.5, -0.6];
        let c3 = f.conditional_expectation(3);
        // first-order part becomes B(t_3)
        let only1 = KernelChaos::zero(g, 1).with_kernel(1, |_| 1.0).unwrap().conditional_expectation(3);
        assert!((only1.evaluate_increments(&db) - 0.0).abs() < 1e-15);
        assert!(c3.support_defect(3) == 0.0);
    }
}

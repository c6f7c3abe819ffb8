//! Hida–Malliavin derivative, Skorohod integral, conditional expectation and
//! Clark–Ocone, on both chaos representations.

use serde::Serialize;

use crate::chaos::{
    hermite_functions, ChaosProcess, HermiteBasis, HermiteChaos, KernelChaos, MultiIndex, Overflow, TimeGrid,
    Truncation,
};
use crate::error::{ChaosError, Result};
use crate::mc::{Estimate, McEnsemble};

/// Outcome of an identity check.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct CheckReport {
    pub lhs: f64,
    pub rhs: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl CheckReport {
    pub fn new(lhs: f64, rhs: f64, tolerance: f64) -> Self {
        Self { lhs, rhs, tolerance, pass: (lhs - rhs).abs() <= tolerance }
    }
}

/// `D_t F = Σ_{α,k} c_α α_k e_k(t) H_{α−ε^(k)}`.
pub fn malliavin_derivative(f: &HermiteChaos, t: f64, basis: &HermiteBasis) -> Result<HermiteChaos> {
    let mut e = Vec::new();
    hermite_functions(basis.k(), t, &mut e);
    malliavin_derivative_with(f, &e)
}

/// Derivative at grid index `i` (uses the stored `e_k(t_i)`).
pub fn malliavin_derivative_at(f: &HermiteChaos, i: usize, basis: &HermiteBasis) -> Result<HermiteChaos> {
    let e: Vec<f64> = (1..=basis.k()).map(|k| basis.e(k, i)).collect();
    malliavin_derivative_with(f, &e)
}

fn malliavin_derivative_with(f: &HermiteChaos, e: &[f64]) -> Result<HermiteChaos> {
    let mut out = HermiteChaos::zero(f.truncation());
    for (a, c) in f.terms() {
        for (k, ak) in a.support() {
            if k > e.len() {
                return Err(ChaosError::VariableOverflow { alpha: a.clone(), k: e.len() });
            }
            let lower = a.sub_unit(k).expect("k is in the support");
            out.add_term(lower, c * ak as f64 * e[k - 1], Overflow::Strict)?;
        }
    }
    Ok(out)
}

/// `D_{t_j} F = Σ n I_{n−1}(f_n(·, t_j))`.
pub fn malliavin_kernel(f: &KernelChaos, t: f64) -> Result<KernelChaos> {
    let j = grid_index(f.grid(), t)?;
    Ok(f.malliavin_kernel(j))
}

/// `E[F | F_t]` by restricting every kernel to `[0, t)ⁿ`.
pub fn conditional_expectation(f: &KernelChaos, t: f64) -> Result<KernelChaos> {
    let j = grid_index(f.grid(), t)?;
    Ok(f.conditional_expectation(j))
}

fn grid_index(grid: &TimeGrid, t: f64) -> Result<usize> {
    grid.index_of(t).ok_or_else(|| ChaosError::InvalidArgument(format!("time {t} is not a grid point")))
}

/// `δ(Y) = Σ_{α,k} (∫_0^T a_α e_k) H_{α+ε^(k)}`; the output order cap is `N_Y + 1`.
pub fn skorohod_integral(y: &ChaosProcess, basis: &HermiteBasis) -> Result<HermiteChaos> {
    if y.grid() != basis.grid() {
        return Err(ChaosError::InvalidArgument("process and basis grids differ".into()));
    }
    let tr = y.truncation();
    let out_tr = Truncation::new(tr.k, tr.n + 1);
    let mut out = HermiteChaos::zero(out_tr);
    for (a, values) in y.terms() {
        for k in 1..=basis.k().min(tr.k) {
            let c = basis.pair(values, k);
            out.add_term(a.add_unit(k), c, Overflow::Strict)?;
        }
    }
    Ok(out)
}

/// `t ↦ D_{t_j} φ(t)` as a process.
pub fn derivative_process(phi: &ChaosProcess, j: usize, basis: &HermiteBasis) -> Result<ChaosProcess> {
    let slices: Vec<HermiteChaos> =
        (0..phi.grid().len()).map(|i| malliavin_derivative_at(&phi.at(i), j, basis)).collect::<Result<_>>()?;
    ChaosProcess::from_slices(*phi.grid(), &slices)
}

/// Coefficient deviations in `D_t ∫φ δB = ∫ D_tφ δB + φ(t)`.
#[derive(Clone, Debug, Serialize)]
pub struct FundamentalReport {
    /// Largest deviation with `φ(t)` in its basis projection `Σ_k e_k(t)(φ, e_k)`.
    pub deviation: f64,
    /// Largest `|φ(t) − P_K φ(t)|` over coefficients: the finite-`K` gap.
    pub projection_gap: f64,
}

/// Compares `malliavin_derivative(skorohod_integral(φ), t_j)` with
/// `skorohod_integral(D_{t_j}φ) + φ(t_j)` coefficientwise.
pub fn fundamental_theorem_check(phi: &ChaosProcess, j: usize, basis: &HermiteBasis) -> Result<FundamentalReport> {
    let delta = skorohod_integral(phi, basis)?;
    let lhs = malliavin_derivative_at(&delta, j, basis)?;
    let dphi = derivative_process(phi, j, basis)?;
    let inner = skorohod_integral(&dphi, basis)?;
    let mut projected = HermiteChaos::zero(lhs.truncation());
    let raw = phi.at(j);
    for (a, values) in phi.terms() {
        let c: f64 = (1..=basis.k()).map(|k| basis.e(k, j) * basis.pair(values, k)).sum();
        projected.add_term(a.clone(), c, Overflow::Strict)?;
    }
    let rhs = inner.add(&projected);
    Ok(FundamentalReport { deviation: lhs.max_abs_diff(&rhs), projection_gap: projected.max_abs_diff(&raw) })
}

/// Integrand `u(t_i)` stored as one kernel chaos per grid point.
#[derive(Clone, Debug)]
pub struct AdaptedIntegrand {
    grid: TimeGrid,
    values: Vec<KernelChaos>,
}

impl AdaptedIntegrand {
    pub fn new(grid: TimeGrid, values: Vec<KernelChaos>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(ChaosError::InvalidArgument("one value per grid point is required".into()));
        }
        if values.iter().any(|v| *v.grid() != grid) {
            return Err(ChaosError::InvalidArgument("integrand values live on a different grid".into()));
        }
        Ok(Self { grid, values })
    }

    /// Deterministic integrand `u(t_i) = f[i]`.
    pub fn deterministic(grid: TimeGrid, f: &[f64]) -> Result<Self> {
        let values = f.iter().map(|&v| KernelChaos::constant(grid, 0, v)).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn at(&self, i: usize) -> &KernelChaos {
        &self.values[i]
    }

    pub fn values(&self) -> &[KernelChaos] {
        &self.values
    }

    /// Largest kernel value outside `[0, t_i)ⁿ` over all `i`.
    pub fn adaptedness_defect(&self) -> f64 {
        self.values.iter().enumerate().map(|(i, v)| v.support_defect(i)).fold(0.0, f64::max)
    }

    /// `Σ_i u(t_i) ΔB_i` on one path.
    pub fn ito_sum(&self, db: &[f64]) -> f64 {
        db.iter().enumerate().map(|(i, d)| self.values[i].evaluate_increments(db) * d).sum()
    }

    /// `u(t_i)` evaluated on one path, every grid point.
    pub fn path(&self, db: &[f64]) -> Vec<f64> {
        self.values.iter().map(|v| v.evaluate_increments(db)).collect()
    }
}

/// `φ(t_j) = E[D_{t_j} F | F_{t_j}]` at every grid point.
pub fn clark_ocone(f: &KernelChaos) -> AdaptedIntegrand {
    let grid = *f.grid();
    let values = (0..grid.len()).map(|j| f.malliavin_kernel(j).conditional_expectation(j)).collect();
    AdaptedIntegrand { grid, values }
}

/// `δ(u) = Σ_m I_{m+1}(Sym g)` with `g(s_1..s_m, t) = f_m^{u(t)}(s_1..s_m)`.
///
/// For adapted `u` the pathwise value is the Itô sum `Σ u(t_i) ΔB_i`.
pub fn skorohod_kernel(u: &AdaptedIntegrand) -> Result<KernelChaos> {
    let top = u.values.iter().map(|v| v.max_order()).max().unwrap_or(0);
    let mut out = KernelChaos::zero(u.grid, top + 1);
    for m in 0..=top {
        let n = m + 1;
        let sym = out.sym_index(n).clone();
        let mut vals = vec![0.0; sym.size()];
        let mut rest = vec![0usize; m];
        sym.for_each_sorted(|idx| {
            let mut s = 0.0;
            for l in 0..n {
                let mut r = 0;
                for (q, &v) in idx.iter().enumerate() {
                    if q != l {
                        rest[r] = v;
                        r += 1;
                    }
                }
                let ut = &u.values[idx[l]];
                if m <= ut.max_order() {
                    s += ut.get(&rest);
                }
            }
            vals[sym.rank_sorted(idx)] = s / n as f64;
        });
        out = out.with_sorted_kernel(n, vals)?;
    }
    Ok(out)
}

/// `E[F ∫u dB]` against `E[∫ u(t) E[D_tF | F_t] dt]` on shared samples.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct DualityReport {
    pub lhs: Estimate,
    pub rhs: Estimate,
    /// Mean and standard error of the per-path difference.
    pub difference: Estimate,
    pub pass: bool,
}

/// Duality check; the time integral is the left Riemann sum matching the Itô sum.
pub fn duality_check(f: &KernelChaos, u: &AdaptedIntegrand, ens: &McEnsemble) -> Result<DualityReport> {
    if f.grid() != ens.grid() || u.grid() != ens.grid() {
        return Err(ChaosError::InvalidArgument("grids differ".into()));
    }
    let phi = clark_ocone(f);
    let dt = ens.grid().dt();
    let rows: Vec<(f64, f64)> = par_paths(ens, |db| {
        let fv = f.evaluate_increments(db);
        let uv = u.path(db);
        let pv = phi.path(db);
        let ito: f64 = db.iter().enumerate().map(|(i, d)| uv[i] * d).sum();
        let time: f64 = (0..db.len()).map(|i| uv[i] * pv[i] * dt).sum();
        (fv * ito, time)
    });
    Ok(paired_report(&rows))
}

fn paired_report(rows: &[(f64, f64)]) -> DualityReport {
    let l: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let r: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let d: Vec<f64> = rows.iter().map(|r| r.0 - r.1).collect();
    let difference = Estimate::of(&d);
    let pass = difference.within(0.0, 3.0, 1e-12);
    DualityReport { lhs: Estimate::of(&l), rhs: Estimate::of(&r), difference, pass }
}

pub(crate) fn par_paths<T: Send>(ens: &McEnsemble, f: impl Fn(&[f64]) -> T + Sync) -> Vec<T> {
    use rayon::prelude::*;
    (0..ens.n_paths()).into_par_iter().map(|p| f(&ens.increments(p))).collect()
}

/// `δ(F u) = F δ(u) − ∫ u D_tF dt` for deterministic `u`, on shared samples.
///
/// The left side is built as a kernel chaos and evaluated pathwise; the right
/// side uses ordinary pathwise products and a left Riemann sum in time.
pub fn integration_by_parts_check(f: &KernelChaos, u: &[f64], ens: &McEnsemble) -> Result<DualityReport> {
    let grid = *ens.grid();
    if *f.grid() != grid || u.len() != grid.len() {
        return Err(ChaosError::InvalidArgument("grids differ".into()));
    }
    let fu: Vec<KernelChaos> = u.iter().map(|&v| f.scale(v)).collect();
    let lhs_kernel = skorohod_kernel(&AdaptedIntegrand::new(grid, fu)?)?;
    let dt = grid.dt();
    let derivs: Vec<KernelChaos> = (0..grid.len()).map(|j| f.malliavin_kernel(j)).collect();
    let rows: Vec<(f64, f64)> = par_paths(ens, |db| {
        let lhs = lhs_kernel.evaluate_increments(db);
        let fv = f.evaluate_increments(db);
        let du: f64 = db.iter().enumerate().map(|(i, d)| u[i] * d).sum();
        let corr: f64 = (0..db.len()).map(|i| u[i] * derivs[i].evaluate_increments(db) * dt).sum();
        (lhs, fv * du - corr)
    });
    Ok(paired_report(&rows))
}

/// Polynomial `φ(x_1, …, x_m) = Σ c Π x_i^{e_i}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Polynomial {
    pub terms: Vec<(f64, Vec<u32>)>,
}

impl Polynomial {
    pub fn new(terms: Vec<(f64, Vec<u32>)>) -> Self {
        Self { terms }
    }

    pub fn degree(&self) -> usize {
        self.terms.iter().map(|(_, e)| e.iter().sum::<u32>() as usize).max().unwrap_or(0)
    }

    pub fn partial(&self, i: usize) -> Polynomial {
        let terms = self
            .terms
            .iter()
            .filter_map(|(c, e)| {
                let ei = e.get(i).copied().unwrap_or(0);
                if ei == 0 {
                    return None;
                }
                let mut e2 = e.clone();
                e2[i] -= 1;
                Some((c * ei as f64, e2))
            })
            .collect();
        Polynomial { terms }
    }

    /// `φ(F_1, …, F_m)` with kernel products, order cap `cap`.
    pub fn apply(&self, fs: &[KernelChaos], cap: usize) -> Result<KernelChaos> {
        let grid = *fs[0].grid();
        let mut out = KernelChaos::zero(grid, cap);
        for (c, e) in &self.terms {
            let mut term = KernelChaos::constant(grid, cap, *c);
            for (i, &p) in e.iter().enumerate() {
                for _ in 0..p {
                    term = term.product(&fs[i], cap)?;
                }
            }
            out = out.axpby(1.0, &term, 1.0)?;
        }
        Ok(out)
    }
}

/// Largest pathwise `|D_t φ(F) − Σ ∂_iφ(F) D_tF_i|` at grid index `j`.
///
/// Both sides are formed as kernel chaos with the same product rule, so the
/// deviation is at rounding level.
pub fn chain_rule_check(fs: &[KernelChaos], phi: &Polynomial, j: usize, cap: usize, ens: &McEnsemble) -> Result<f64> {
    if fs.is_empty() {
        return Err(ChaosError::InvalidArgument("need at least one variable".into()));
    }
    let top = fs.iter().map(|f| f.effective_order()).max().unwrap_or(0);
    if phi.degree() * top > cap {
        return Err(ChaosError::OrderOverflow {
            alpha: MultiIndex::new(vec![(phi.degree() * top) as u32]),
            cap,
            dropped: f64::NAN,
        });
    }
    let lhs = phi.apply(fs, cap)?.malliavin_kernel(j);
    let mut rhs = KernelChaos::zero(*fs[0].grid(), cap);
    for (i, fi) in fs.iter().enumerate() {
        let dphi = phi.partial(i).apply(fs, cap)?;
        let prod = dphi.product(&fi.malliavin_kernel(j), cap)?;
        rhs = rhs.axpby(1.0, &prod, 1.0)?;
    }
    let diff = lhs.axpby(1.0, &rhs, -1.0)?;
    let vals = ens.evaluate_kernel(&diff)?;
    Ok(vals.iter().fold(0.0, |m, v| m.max(v.abs())))
}

impl KernelChaos {
    pub(crate) fn with_sorted_kernel(self, n: usize, vals: Vec<f64>) -> Result<Self> {
        let mut out = if n > self.max_order() { self.with_max_order(n) } else { self };
        out.set_sorted(n, vals)?;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chaos::brownian_chaos;

    #[test]
    fn derivative_of_brownian_is_indicator_projection() {
        let basis = HermiteBasis::new(10, TimeGrid::new(1.0, 32).unwrap()).unwrap();
        let b = brownian_chaos(1.0, &basis, Truncation::new(10, 3)).unwrap();
        let d = malliavin_derivative_at(&b, 8, &basis).unwrap();
        let want: f64 = basis.projected_indicator(32)[8];
        assert!((d.expectation() - want).abs() < 1e-14);
        assert_eq!(d.max_order(), 0);
    }

    #[test]
    fn clark_ocone_of_square() {
        let g = TimeGrid::new(1.0, 8).unwrap();
        let f = KernelChaos::constant(g, 2, 1.0).with_kernel(2, |_| 1.0).unwrap();
        let phi = clark_ocone(&f);
        assert_eq!(phi.adaptedness_defect(), 0.0);
        let db = [0.1, -0.3, 0.2, 0.4, -0.1, 0.0, 0.3, -0.2];
        // φ(t_j) = 2 B(t_j)
        let b3: f64 = db[..3].iter().sum();
        assert!((phi.at(3).evaluate_increments(&db) - 2.0 * b3).abs() < 1e-14);
        let recon = f.f0() + phi.ito_sum(&db);
        assert!((recon - f.evaluate_increments(&db)).abs() < 1e-14);
    }

    #[test]
    fn skorohod_of_adapted_matches_ito_sum() {
        let g = TimeGrid::new(1.0, 6).unwrap();
        let f = KernelChaos::zero(g, 3).with_kernel(3, |t| t[0] * t[1] + t[2]).unwrap();
        let phi = clark_ocone(&f);
        let d = skorohod_kernel(&phi).unwrap();
        let db = [0.2, -0.1, 0.3, 0.05, -0.25, 0.15];
        assert!((d.evaluate_increments(&db) - phi.ito_sum(&db)).abs() < 1e-13);
        assert!((d.evaluate_increments(&db) - f.evaluate_increments(&db)).abs() < 1e-13);
    }
}

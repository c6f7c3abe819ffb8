//! Linear backward stochastic Volterra equations with jumps,
//!
//! `Y(t) = F(t) + ∫_t^T [Φ(t,s)Y(s) + ξ(s)Z(t,s) + Σ_ζ β(s,ζ)K(t,s,ζ)ν] ds
//!         − ∫_t^T Z(t,s) dB(s) − ∫_t^T∫ K(t,s,ζ) Ñ(ds,dζ)`,
//!
//! solved through the resolvent `Ψ = Σ_n Φ^{(n)}` and the change of measure
//! that absorbs the `ξZ` and `βK` terms.
//!
//! Kernel rows `r ↦ Φ^{(n)}(t,r)` are held as Chebyshev interpolants on
//! `[t, T]`; convolutions use Gauss–Legendre on `[t, r]`.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chaos::quadrature::quadrature_weights;
use crate::chaos::{gauss_legendre_on, Chebyshev, TimeGrid};
use crate::error::{ChaosError, Result};
use crate::mc::{regress, state_features, Estimate, LevyModel, McEnsemble};

pub type TimeFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type TwoTimeFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
/// `(ensemble, path, grid index) ↦ value`, for adapted coefficients.
pub type PathFn = Arc<dyn Fn(&McEnsemble, usize, usize) -> f64 + Send + Sync>;

/// Chebyshev nodes per kernel row.
pub const ROW_NODES: usize = 32;
/// Chebyshev nodes for functions of one time variable on `[0, T]`.
pub const GLOBAL_NODES: usize = 48;
const GL_NODES: usize = 32;
const MAX_TERMS: usize = 400;

pub fn constant_fn(c: f64) -> TimeFn {
    Arc::new(move |_| c)
}

/// Volterra kernel `Φ(t, r)` on `t ≤ r` with a recorded bound `|Φ| ≤ C`.
#[derive(Clone)]
pub struct VolterraKernel {
    f: TwoTimeFn,
    bound: f64,
    label: String,
}

impl fmt::Debug for VolterraKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "VolterraKernel({}, C = {})", self.label, self.bound)
    }
}

impl VolterraKernel {
    pub fn zero() -> Self {
        Self { f: Arc::new(|_, _| 0.0), bound: 0.0, label: "zero".into() }
    }

    pub fn constant(c: f64) -> Self {
        Self { f: Arc::new(move |_, _| c), bound: c.abs(), label: format!("constant {c}") }
    }

    /// `scale · e^{−rate (r − t)}`.
    pub fn exp_decay(scale: f64, rate: f64) -> Self {
        let bound = if rate >= 0.0 { scale.abs() } else { f64::NAN };
        Self {
            f: Arc::new(move |t, r| scale * (-rate * (r - t)).exp()),
            bound,
            label: format!("exp-decay {scale}, {rate}"),
        }
    }

    /// Bilinear interpolation of row-compressed grid values, `rows[i][j − i] = Φ(t_i, t_j)`.
    pub fn tabulated(grid: TimeGrid, rows: Vec<Vec<f64>>) -> Result<Self> {
        let m = grid.steps;
        if rows.len() != m + 1 || rows.iter().enumerate().any(|(i, r)| r.len() != m + 1 - i) {
            return Err(ChaosError::InvalidArgument("tabulated kernel rows must be t_i..T slices of the grid".into()));
        }
        let bound = rows.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
        let h = grid.dt();
        let at = move |i: usize, j: usize| rows[i][j.max(i) - i];
        let f = move |t: f64, r: f64| {
            let x = (t / h).clamp(0.0, m as f64);
            let y = (r / h).clamp(0.0, m as f64);
            let i = (x.floor() as usize).min(m - 1);
            let j = (y.floor() as usize).min(m - 1);
            let (u, v) = (x - i as f64, y - j as f64);
            (1.0 - u) * (1.0 - v) * at(i, j)
                + u * (1.0 - v) * at(i + 1, j)
                + (1.0 - u) * v * at(i, j + 1)
                + u * v * at(i + 1, j + 1)
        };
        Ok(Self { f: Arc::new(f), bound, label: "tabulated".into() })
    }

    /// Arbitrary kernel; `bound` must dominate `|Φ|` on the triangle.
    pub fn from_fn(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static, bound: f64) -> Self {
        Self { f: Arc::new(f), bound, label: "custom".into() }
    }

    pub fn eval(&self, t: f64, r: f64) -> f64 {
        (self.f)(t, r)
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

/// Named kernel presets accepted in configuration files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum KernelPreset {
    Zero,
    Constant {
        value: f64,
    },
    ExpDecay {
        #[serde(default = "one")]
        scale: f64,
        #[serde(default = "one")]
        rate: f64,
    },
    Tabulated {
        values: Vec<Vec<f64>>,
    },
}

fn one() -> f64 {
    1.0
}

impl KernelPreset {
    pub fn build(&self, grid: TimeGrid) -> Result<VolterraKernel> {
        match self {
            Self::Zero => Ok(VolterraKernel::zero()),
            Self::Constant { value } => Ok(VolterraKernel::constant(*value)),
            Self::ExpDecay { scale, rate } => {
                if *rate < 0.0 {
                    return Err(ChaosError::InvalidArgument("exp-decay rate must be non-negative".into()));
                }
                Ok(VolterraKernel::exp_decay(*scale, *rate))
            }
            Self::Tabulated { values } => VolterraKernel::tabulated(grid, values.clone()),
        }
    }
}

/// Grid values on the triangle `t_i ≤ t_j`, stored per row: `rows[i][j − i]`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TriangleKernel {
    pub grid: TimeGrid,
    pub rows: Vec<Vec<f64>>,
}

impl TriangleKernel {
    pub fn from_fn(grid: TimeGrid, f: impl Fn(f64, f64) -> f64) -> Self {
        let m = grid.steps;
        let rows = (0..=m).map(|i| (i..=m).map(|j| f(grid.t(i), grid.t(j))).collect()).collect();
        Self { grid, rows }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i][j - i]
    }

    pub fn max_abs(&self) -> f64 {
        self.rows.iter().flatten().fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.rows.iter().flatten().zip(other.rows.iter().flatten()).fold(0.0, |a, (x, y)| a.max((x - y).abs()))
    }

    /// `(t, r, value)` triples in row order.
    pub fn triples(&self) -> Vec<(f64, f64, f64)> {
        let mut out = Vec::new();
        for (i, row) in self.rows.iter().enumerate() {
            for (k, v) in row.iter().enumerate() {
                out.push((self.grid.t(i), self.grid.t(i + k), *v));
            }
        }
        out
    }
}

/// `C^n T^{n−1} / (n−1)!`: what induction on the convolution actually gives.
pub fn factorial_bound(c: f64, horizon: f64, n: usize) -> f64 {
    assert!(n >= 1);
    let mut b = c;
    for k in 1..n {
        b *= c * horizon / k as f64;
    }
    b
}

/// `C^n T^n / n!`, the sharper form that is sometimes quoted. It fails
/// already for `Φ ≡ 1`, `n = 2`, `T = 1`.
pub fn quoted_factorial_bound(c: f64, horizon: f64, n: usize) -> f64 {
    factorial_bound(c, horizon, n) * horizon / n as f64
}

/// Number of terms `n` such that `Σ_{m > n} C^m T^{m−1}/(m−1)! < tol`.
pub fn terms_needed(c: f64, horizon: f64, tol: f64) -> usize {
    if c == 0.0 {
        return 1;
    }
    for n in 1..MAX_TERMS {
        let mut tail = 0.0;
        let mut term = factorial_bound(c, horizon, n + 1);
        let mut m = n + 1;
        while term > 1e-300 && m < n + 2000 {
            tail += term;
            term *= c * horizon / m as f64;
            m += 1;
            if (m as f64) > 2.0 * c * horizon && term < tail * 1e-17 {
                break;
            }
        }
        if tail < tol {
            return n;
        }
    }
    MAX_TERMS
}

/// One row `r ↦ Φ^{(n)}(t, r)`, `n = 1..=terms.len()`, and their sum.
#[derive(Clone, Debug)]
pub struct ResolventRow {
    pub t: f64,
    pub terms: Vec<Chebyshev>,
    pub psi: Chebyshev,
}

impl ResolventRow {
    fn compute(kernel: &VolterraKernel, t: f64, horizon: f64, n_terms: usize) -> Self {
        let len = horizon - t;
        let nodes = Chebyshev::nodes_for(ROW_NODES, t, horizon);
        let mut terms = Vec::with_capacity(n_terms);
        let first: Vec<f64> = if len <= 1e-14 {
            vec![kernel.eval(t, t); ROW_NODES]
        } else {
            nodes.iter().map(|&r| kernel.eval(t, r)).collect()
        };
        let mut psi = first.clone();
        terms.push(Chebyshev::from_values(t, horizon, first));
        for _ in 1..n_terms {
            let prev = terms.last().unwrap();
            let vals: Vec<f64> = if len <= 1e-14 {
                vec![0.0; ROW_NODES]
            } else if prev.values.iter().all(|v| *v == 0.0) {
                vec![0.0; ROW_NODES]
            } else {
                nodes
                    .iter()
                    .map(|&r| {
                        if r - t <= 0.0 {
                            return 0.0;
                        }
                        let (x, w) = gauss_legendre_on(GL_NODES, t, r);
                        x.iter().zip(&w).map(|(&s, &ws)| ws * prev.eval(s) * kernel.eval(s, r)).sum()
                    })
                    .collect()
            };
            for (p, v) in psi.iter_mut().zip(&vals) {
                *p += v;
            }
            terms.push(Chebyshev::from_values(t, horizon, vals));
        }
        Self { t, terms, psi: Chebyshev::from_values(t, horizon, psi) }
    }

    pub fn psi(&self, r: f64) -> f64 {
        self.psi.eval(r)
    }

    /// `∫_t^T Ψ(t, r) g(r) dr`.
    pub fn apply(&self, horizon: f64, g: impl Fn(f64) -> f64) -> f64 {
        if horizon - self.t <= 0.0 {
            return 0.0;
        }
        let (x, w) = gauss_legendre_on(GL_NODES, self.t, horizon);
        x.iter().zip(&w).map(|(&r, &wr)| wr * self.psi.eval(r) * g(r)).sum()
    }
}

/// `Φ^{(n)}` on the grid triangle.
pub fn resolvent_phi_n(kernel: &VolterraKernel, grid: TimeGrid, n: usize) -> Result<TriangleKernel> {
    if n == 0 {
        return Err(ChaosError::InvalidArgument("Φ^(n) needs n ≥ 1".into()));
    }
    let rows: Vec<ResolventRow> =
        (0..=grid.steps).map(|i| ResolventRow::compute(kernel, grid.t(i), grid.horizon, n)).collect();
    Ok(TriangleKernel::from_fn(grid, |t, r| {
        let i = grid.index_of(t).unwrap();
        rows[i].terms[n - 1].eval(r)
    }))
}

/// Resolvent `Ψ = Σ_{n ≤ N} Φ^{(n)}` with `N` from the factorial bound.
#[derive(Clone, Debug)]
pub struct Resolvent {
    pub kernel: VolterraKernel,
    pub grid: TimeGrid,
    pub tol: f64,
    pub n_terms: usize,
    /// Rows at the grid points.
    pub rows: Vec<ResolventRow>,
    /// Rows at the Chebyshev nodes of `[0, T]`.
    pub global_rows: Vec<ResolventRow>,
}

/// Per-order comparison of `max|Φ^{(n)}|` with the factorial bounds.
#[derive(Clone, Debug, Serialize)]
pub struct BoundReport {
    pub max_abs: Vec<f64>,
    pub bound: Vec<f64>,
    pub quoted_bound: Vec<f64>,
    /// Orders where the proven bound fails (should be empty).
    pub violations: Vec<usize>,
    /// Orders where the `C^n T^n / n!` form fails.
    pub quoted_violations: Vec<usize>,
}

pub fn resolvent_psi(kernel: &VolterraKernel, grid: TimeGrid, tol: f64) -> Result<Resolvent> {
    if !(tol > 0.0) {
        return Err(ChaosError::InvalidArgument("resolvent tolerance must be positive".into()));
    }
    let c = kernel.bound();
    if !c.is_finite() {
        return Err(ChaosError::InvalidArgument("kernel bound must be finite".into()));
    }
    let n_terms = terms_needed(c, grid.horizon, tol);
    let rows = (0..=grid.steps).map(|i| ResolventRow::compute(kernel, grid.t(i), grid.horizon, n_terms)).collect();
    let global_rows = Chebyshev::nodes_for(GLOBAL_NODES, 0.0, grid.horizon)
        .into_iter()
        .map(|t| ResolventRow::compute(kernel, t, grid.horizon, n_terms))
        .collect();
    Ok(Resolvent { kernel: kernel.clone(), grid, tol, n_terms, rows, global_rows })
}

impl Resolvent {
    pub fn psi_grid(&self) -> TriangleKernel {
        TriangleKernel::from_fn(self.grid, |t, r| self.rows[self.grid.index_of(t).unwrap()].psi(r))
    }

    pub fn phi_n_grid(&self, n: usize) -> Option<TriangleKernel> {
        if n == 0 || n > self.n_terms {
            return None;
        }
        Some(TriangleKernel::from_fn(self.grid, |t, r| self.rows[self.grid.index_of(t).unwrap()].terms[n - 1].eval(r)))
    }

    /// Row at an arbitrary `t` (the stored row when `t` is a grid point).
    pub fn row(&self, t: f64) -> ResolventRow {
        match self.grid.index_of(t) {
            Some(i) => self.rows[i].clone(),
            None => ResolventRow::compute(&self.kernel, t, self.grid.horizon, self.n_terms),
        }
    }

    /// `max |Ψ − Φ − Ψ∗Φ|` over the grid triangle.
    pub fn identity_defect(&self) -> f64 {
        let g = self.grid;
        let mut worst = 0.0f64;
        for (i, row) in self.rows.iter().enumerate() {
            for j in i..=g.steps {
                let (t, r) = (g.t(i), g.t(j));
                let conv = if r > t {
                    let (x, w) = gauss_legendre_on(GL_NODES, t, r);
                    x.iter().zip(&w).map(|(&s, &ws)| ws * row.psi(s) * self.kernel.eval(s, r)).sum()
                } else {
                    0.0
                };
                worst = worst.max((row.psi(r) - self.kernel.eval(t, r) - conv).abs());
            }
        }
        worst
    }

    pub fn bound_report(&self) -> BoundReport {
        let c = self.kernel.bound();
        let t = self.grid.horizon;
        let mut rep = BoundReport {
            max_abs: vec![],
            bound: vec![],
            quoted_bound: vec![],
            violations: vec![],
            quoted_violations: vec![],
        };
        for n in 1..=self.n_terms {
            let m = self
                .rows
                .iter()
                .map(|row| {
                    (0..=4 * ROW_NODES)
                        .map(|k| row.terms[n - 1].eval(row.t + (t - row.t) * k as f64 / (4 * ROW_NODES) as f64).abs())
                        .fold(0.0, f64::max)
                })
                .fold(0.0, f64::max);
            let b = factorial_bound(c, t, n);
            let pb = quoted_factorial_bound(c, t, n);
            // relative slack for interpolation roundoff
            if m > b * (1.0 + 1e-9) + 1e-14 {
                rep.violations.push(n);
            }
            if m > pb * (1.0 + 1e-9) + 1e-14 {
                rep.quoted_violations.push(n);
            }
            rep.max_abs.push(m);
            rep.bound.push(b);
            rep.quoted_bound.push(pb);
        }
        rep
    }
}

/// Which time the free term reads `B` and `J` at: `F(t)` uses `B(T)` or `B(t)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pin {
    #[default]
    Terminal,
    Current,
}

/// Free term `F(t)`.
#[derive(Clone)]
pub enum FreeTerm {
    Deterministic(TimeFn),
    /// `F(t) = a(t) + b(t) B(ϑ) + c(t) J(ϑ)` with `J = ∫∫ ζ Ñ(ds,dζ)` and `ϑ ∈ {T, t}`.
    Affine {
        a: TimeFn,
        b: TimeFn,
        c: TimeFn,
        pin: Pin,
    },
}

impl fmt::Debug for FreeTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Deterministic(_) => write!(f, "FreeTerm::Deterministic"),
            Self::Affine { pin, .. } => write!(f, "FreeTerm::Affine({pin:?})"),
        }
    }
}

/// Drift coefficient of `Z`.
#[derive(Clone)]
pub enum Drift {
    Deterministic(TimeFn),
    Adapted(PathFn),
}

impl fmt::Debug for Drift {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Deterministic(_) => write!(f, "Drift::Deterministic"),
            Self::Adapted(_) => write!(f, "Drift::Adapted"),
        }
    }
}

#[derive(Clone)]
pub struct BsvieSpec {
    pub grid: TimeGrid,
    pub phi: VolterraKernel,
    pub xi_drift: Drift,
    /// `β(s, ζ)` per atom.
    pub beta: Vec<TimeFn>,
    pub free: FreeTerm,
    pub levy: Option<LevyModel>,
}

impl fmt::Debug for BsvieSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BsvieSpec")
            .field("grid", &self.grid)
            .field("phi", &self.phi)
            .field("xi_drift", &self.xi_drift)
            .field("atoms", &self.beta.len())
            .field("free", &self.free)
            .finish()
    }
}

impl BsvieSpec {
    /// `Φ`, no drift or tilt, deterministic `F`.
    pub fn deterministic(grid: TimeGrid, phi: VolterraKernel, f: TimeFn) -> Self {
        Self {
            grid,
            phi,
            xi_drift: Drift::Deterministic(constant_fn(0.0)),
            beta: vec![],
            free: FreeTerm::Deterministic(f),
            levy: None,
        }
    }

    pub fn atoms(&self) -> usize {
        self.levy.as_ref().map(|l| l.len()).unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.beta.len() != self.atoms() {
            return Err(ChaosError::InvalidArgument(format!(
                "β has {} atoms, Lévy model {}",
                self.beta.len(),
                self.atoms()
            )));
        }
        for (a, b) in self.beta.iter().enumerate() {
            for i in 0..=self.grid.steps {
                let v = b(self.grid.t(i));
                if !(1.0 + v > 0.0) {
                    return Err(ChaosError::Domain(format!(
                        "1 + β = {} ≤ 0 at t = {}, atom {a}",
                        1.0 + v,
                        self.grid.t(i)
                    )));
                }
            }
        }
        Ok(())
    }

    fn xi_det(&self) -> Option<&TimeFn> {
        match &self.xi_drift {
            Drift::Deterministic(f) => Some(f),
            Drift::Adapted(_) => None,
        }
    }

    fn xi_at(&self, ens: &McEnsemble, path: usize, i: usize) -> f64 {
        match &self.xi_drift {
            Drift::Deterministic(f) => f(self.grid.t(i)),
            Drift::Adapted(f) => f(ens, path, i),
        }
    }

    /// `Σ_ζ ζ β(s, ζ) ν`: the `Q`-drift of `J`.
    fn jump_drift(&self, s: f64) -> f64 {
        match &self.levy {
            Some(l) => l.atoms.iter().zip(&self.beta).map(|(a, b)| a.zeta * a.nu * b(s)).sum(),
            None => 0.0,
        }
    }
}

/// Density process of `Q` on the grid. Coefficients act as left-point
/// constants on each cell, which makes `M` an exact discrete martingale.
#[derive(Clone, Debug)]
pub struct GirsanovChange {
    pub grid: TimeGrid,
    pub n_paths: usize,
    /// `M(t_i)` row-major by path.
    pub m: Vec<f64>,
    /// `∫_0^{t_i} ξ ds` per path, for `B_Q`.
    pub drift: Vec<f64>,
}

pub fn girsanov_build(spec: &BsvieSpec, ens: &McEnsemble) -> Result<GirsanovChange> {
    spec.validate()?;
    let g = spec.grid;
    if ens.grid() != &g {
        return Err(ChaosError::InvalidArgument("ensemble grid differs from the spec grid".into()));
    }
    let m_steps = g.steps;
    let dt = g.dt();
    let p = g.len();
    let atoms = spec.atoms();
    let beta_grid: Vec<Vec<f64>> = spec.beta.iter().map(|b| (0..m_steps).map(|i| b(g.t(i))).collect()).collect();
    let comp_cell: Vec<f64> = (0..m_steps)
        .map(|i| match &spec.levy {
            Some(l) => (0..atoms).map(|a| beta_grid[a][i] * l.atoms[a].nu * dt).sum(),
            None => 0.0,
        })
        .collect();
    let n = ens.n_paths();
    let mut m = vec![0.0; n * p];
    let mut drift = vec![0.0; n * p];
    m.par_chunks_mut(p).zip(drift.par_chunks_mut(p)).enumerate().for_each(|(path, (mrow, drow))| {
        let b = ens.brownian(path);
        let mut jumps_by_cell = vec![0.0; m_steps];
        for j in ens.jumps(path) {
            let c = g.cell_of(j.time);
            jumps_by_cell[c] += (1.0 + beta_grid[j.atom][c]).ln();
        }
        let mut logm = 0.0;
        let mut d = 0.0;
        mrow[0] = 1.0;
        drow[0] = 0.0;
        for i in 0..m_steps {
            let xi = spec.xi_at(ens, path, i);
            logm += xi * (b[i + 1] - b[i]) - 0.5 * xi * xi * dt + jumps_by_cell[i] - comp_cell[i];
            d += xi * dt;
            mrow[i + 1] = logm.exp();
            drow[i + 1] = d;
        }
    });
    Ok(GirsanovChange { grid: g, n_paths: n, m, drift })
}

impl GirsanovChange {
    pub fn m_path(&self, path: usize) -> &[f64] {
        let p = self.grid.len();
        &self.m[path * p..(path + 1) * p]
    }

    pub fn m_terminal(&self) -> Vec<f64> {
        (0..self.n_paths).map(|p| *self.m_path(p).last().unwrap()).collect()
    }

    pub fn mean_terminal(&self) -> Estimate {
        Estimate::of(&self.m_terminal())
    }

    /// `B_Q(t_i) = B(t_i) − ∫_0^{t_i} ξ ds`.
    pub fn b_q(&self, ens: &McEnsemble, path: usize, i: usize) -> f64 {
        ens.brownian(path)[i] - self.drift[path * self.grid.len() + i]
    }

    /// `E_Q[X] = E[M(T) X]`.
    pub fn expect_q(&self, x: &[f64]) -> Estimate {
        let w: Vec<f64> = self.m_terminal().iter().zip(x).map(|(m, x)| m * x).collect();
        Estimate::of(&w)
    }

    /// Bayes weights `M(T)/M(t_i)` for conditional `Q`-expectations given `F_{t_i}`.
    pub fn bayes_weights(&self, i: usize) -> Vec<f64> {
        (0..self.n_paths)
            .map(|p| {
                let row = self.m_path(p);
                row[self.grid.steps] / row[i]
            })
            .collect()
    }
}

/// How `Y` was obtained.
#[derive(Clone, Debug)]
pub enum SolutionForm {
    /// `Y(t) = F(t) + ∫Ψ(t,r)F(r)dr`, also interpolated on `[0, T]`.
    Deterministic { y: Chebyshev },
    /// `Y(t) = y₀(t) + κ_B(t) B(t) + κ_N(t) J(t)`.
    Affine { y0: Vec<f64>, kappa_b: Vec<f64>, kappa_n: Vec<f64>, kappa_b_fn: Chebyshev, kappa_n_fn: Chebyshev },
    /// Bayes-weighted regression.
    Regression { degree: usize },
}

#[derive(Clone, Debug)]
pub struct BsvieSolution {
    pub grid: TimeGrid,
    pub n_paths: usize,
    /// `Y(t_i)` row-major by path.
    pub y: Vec<f64>,
    pub form: SolutionForm,
}

impl BsvieSolution {
    pub fn y_path(&self, path: usize) -> &[f64] {
        let p = self.grid.len();
        &self.y[path * p..(path + 1) * p]
    }

    pub fn y_at(&self, i: usize) -> Vec<f64> {
        (0..self.n_paths).map(|p| self.y_path(p)[i]).collect()
    }

    pub fn mean(&self) -> Vec<Estimate> {
        (0..self.grid.len()).map(|i| Estimate::of(&self.y_at(i))).collect()
    }
}

fn global_interpolant(horizon: f64, rows: &[ResolventRow], f: impl Fn(&ResolventRow) -> f64) -> Chebyshev {
    Chebyshev::from_values(0.0, horizon, rows.iter().map(f).collect())
}

/// `u ↦ ∫_0^u g`, as an interpolant on `[0, T]`.
fn primitive(horizon: f64, g: impl Fn(f64) -> f64) -> Chebyshev {
    let vals = Chebyshev::nodes_for(GLOBAL_NODES, 0.0, horizon)
        .into_iter()
        .map(|u| {
            if u <= 0.0 {
                return 0.0;
            }
            let (x, w) = gauss_legendre_on(GL_NODES, 0.0, u);
            x.iter().zip(&w).map(|(&s, &ws)| ws * g(s)).sum()
        })
        .collect();
    Chebyshev::from_values(0.0, horizon, vals)
}

/// Deterministic parts of the affine closed form at one row.
struct AffineRow {
    y0: f64,
    kappa_b: f64,
    kappa_n: f64,
}

fn affine_row(spec: &BsvieSpec, row: &ResolventRow, xi_int: &Chebyshev, lam_int: &Chebyshev) -> AffineRow {
    let FreeTerm::Affine { a, b, c, pin } = &spec.free else { unreachable!() };
    let t = row.t;
    let big_t = spec.grid.horizon;
    let xi = |u: f64| xi_int.eval(u) - xi_int.eval(t);
    let lam = |u: f64| lam_int.eval(u) - lam_int.eval(t);
    let upto = |r: f64| match pin {
        Pin::Terminal => big_t,
        Pin::Current => r,
    };
    let y0 = a(t)
        + b(t) * xi(upto(t))
        + c(t) * lam(upto(t))
        + row.apply(big_t, |r| a(r) + b(r) * xi(upto(r)) + c(r) * lam(upto(r)));
    AffineRow { y0, kappa_b: b(t) + row.apply(big_t, |r| b(r)), kappa_n: c(t) + row.apply(big_t, |r| c(r)) }
}

/// Free term on the grid for one path.
fn free_path(spec: &BsvieSpec, ens: &McEnsemble, path: usize) -> Vec<f64> {
    let g = spec.grid;
    match &spec.free {
        FreeTerm::Deterministic(f) => (0..=g.steps).map(|i| f(g.t(i))).collect(),
        FreeTerm::Affine { a, b, c, pin } => {
            let bb = ens.brownian(path);
            (0..=g.steps)
                .map(|i| {
                    let t = g.t(i);
                    let (k, u) = match pin {
                        Pin::Terminal => (g.steps, g.horizon),
                        Pin::Current => (i, t),
                    };
                    a(t) + b(t) * bb[k] + c(t) * ens.compensated_jump_sum(path, u)
                })
                .collect()
        }
    }
}

/// `Y(t) = E_Q[F(t) + ∫_t^T Ψ(t,r)F(r)dr | F_t]`.
///
/// Closed forms for deterministic `F`, and for affine `F` when `ξ` is
/// deterministic; otherwise a Bayes-weighted regression of degree 3.
pub fn bsvie_solve_y(spec: &BsvieSpec, res: &Resolvent, ens: &McEnsemble) -> Result<BsvieSolution> {
    spec.validate()?;
    let g = spec.grid;
    if res.grid != g {
        return Err(ChaosError::InvalidArgument("resolvent grid differs from the spec grid".into()));
    }
    let n = ens.n_paths();
    let p = g.len();
    match (&spec.free, spec.xi_det()) {
        (FreeTerm::Deterministic(f), _) => {
            let ygrid: Vec<f64> = res.rows.iter().map(|row| f(row.t) + row.apply(g.horizon, |r| f(r))).collect();
            let y = global_interpolant(g.horizon, &res.global_rows, |row| f(row.t) + row.apply(g.horizon, |r| f(r)));
            Ok(BsvieSolution { grid: g, n_paths: n, y: ygrid.repeat(n), form: SolutionForm::Deterministic { y } })
        }
        (FreeTerm::Affine { .. }, Some(xi)) => {
            let xi_int = primitive(g.horizon, |s| xi(s));
            let lam_int = primitive(g.horizon, |s| spec.jump_drift(s));
            let rows: Vec<AffineRow> = res.rows.iter().map(|r| affine_row(spec, r, &xi_int, &lam_int)).collect();
            let grows: Vec<AffineRow> =
                res.global_rows.iter().map(|r| affine_row(spec, r, &xi_int, &lam_int)).collect();
            let mut y = vec![0.0; n * p];
            y.par_chunks_mut(p).enumerate().for_each(|(path, out)| {
                let b = ens.brownian(path);
                for (i, r) in rows.iter().enumerate() {
                    out[i] = r.y0 + r.kappa_b * b[i] + r.kappa_n * ens.compensated_jump_sum(path, g.t(i));
                }
            });
            let form = SolutionForm::Affine {
                y0: rows.iter().map(|r| r.y0).collect(),
                kappa_b: rows.iter().map(|r| r.kappa_b).collect(),
                kappa_n: rows.iter().map(|r| r.kappa_n).collect(),
                kappa_b_fn: Chebyshev::from_values(0.0, g.horizon, grows.iter().map(|r| r.kappa_b).collect()),
                kappa_n_fn: Chebyshev::from_values(0.0, g.horizon, grows.iter().map(|r| r.kappa_n).collect()),
            };
            Ok(BsvieSolution { grid: g, n_paths: n, y, form })
        }
        (FreeTerm::Affine { .. }, None) => bsvie_solve_y_regression(spec, res, ens, 3),
    }
}

/// `Y(t_i)` by weighted regression of `F(t_i) + ∫Ψ(t_i,r)F(r)dr` on the
/// state at `t_i`, with weights `M(T)/M(t_i)`.
pub fn bsvie_solve_y_regression(
    spec: &BsvieSpec,
    res: &Resolvent,
    ens: &McEnsemble,
    degree: usize,
) -> Result<BsvieSolution> {
    let g = spec.grid;
    let gir = girsanov_build(spec, ens)?;
    let n = ens.n_paths();
    let p = g.len();
    let psi = res.psi_grid();
    let free: Vec<Vec<f64>> = (0..n).into_par_iter().map(|path| free_path(spec, ens, path)).collect();
    let mut y = vec![0.0; n * p];
    for i in 0..=g.steps {
        let w = quadrature_weights(g.steps - i, g.dt());
        let targets: Vec<f64> = free
            .par_iter()
            .map(|f| f[i] + (i..=g.steps).map(|j| w[j - i] * psi.get(i, j) * f[j]).sum::<f64>())
            .collect();
        let fitted = if i == 0 {
            let est = gir.expect_q(&targets).estimate;
            vec![est; n]
        } else {
            let weights = gir.bayes_weights(i);
            regress(&targets, &state_features(ens, i), degree, Some(&weights))
                .map_err(|e| match e {
                    ChaosError::RankDeficient(_) => ChaosError::RankDeficient(i),
                    other => other,
                })?
                .fitted
        };
        for path in 0..n {
            y[path * p + i] = fitted[path];
        }
    }
    Ok(BsvieSolution { grid: g, n_paths: n, y, form: SolutionForm::Regression { degree } })
}

/// `max_t |Y(t) − F(t) − ∫_t^T Φ(t,s)Y(s)ds|` for deterministic `F`, with `Y`
/// taken from its interpolant.
pub fn deterministic_residual(spec: &BsvieSpec, sol: &BsvieSolution) -> Result<f64> {
    let (FreeTerm::Deterministic(f), SolutionForm::Deterministic { y }) = (&spec.free, &sol.form) else {
        return Err(ChaosError::Unsupported("deterministic residual needs deterministic F".into()));
    };
    let g = spec.grid;
    let mut worst = 0.0f64;
    for i in 0..=g.steps {
        let t = g.t(i);
        let integral: f64 = if t < g.horizon {
            let (x, w) = gauss_legendre_on(GL_NODES, t, g.horizon);
            x.iter().zip(&w).map(|(&s, &ws)| ws * spec.phi.eval(t, s) * y.eval(s)).sum()
        } else {
            0.0
        };
        worst = worst.max((sol.y_path(0)[i] - f(t) - integral).abs());
    }
    Ok(worst)
}

/// `Z(t_i, s_j)` and `K(t_i, s_j, ζ)` on the grid triangle.
#[derive(Clone, Debug, Serialize)]
pub struct ZkSolution {
    pub z: TriangleKernel,
    /// One triangle per atom.
    pub k: Vec<TriangleKernel>,
}

/// `Z(t,s) = b(t)[ϑ = T] + ∫_s^T Φ(t,r) κ_B(r) dr` for `s > t`, and the jump
/// analogue `K(t,s,ζ) = ζ (c(t)[ϑ = T] + ∫_s^T Φ(t,r) κ_N(r) dr)`. On the
/// diagonal the right limit `s ↓ t` is stored.
pub fn bsvie_solve_zk(spec: &BsvieSpec, sol: &BsvieSolution) -> Result<ZkSolution> {
    if spec.xi_det().is_none() {
        return Err(ChaosError::Unsupported("Z/K retrieval needs a deterministic drift ξ".into()));
    }
    let g = spec.grid;
    let zero = || TriangleKernel::from_fn(g, |_, _| 0.0);
    match (&spec.free, &sol.form) {
        (FreeTerm::Deterministic(_), _) => Ok(ZkSolution { z: zero(), k: vec![zero(); spec.atoms()] }),
        (FreeTerm::Affine { b, c, pin, .. }, SolutionForm::Affine { kappa_b_fn, kappa_n_fn, .. }) => {
            let term = |t: f64, s: f64, coef: &TimeFn, kappa: &Chebyshev| {
                let direct = if *pin == Pin::Terminal { coef(t) } else { 0.0 };
                let tail = if s < g.horizon {
                    let (x, w) = gauss_legendre_on(GL_NODES, s, g.horizon);
                    x.iter().zip(&w).map(|(&r, &wr)| wr * spec.phi.eval(t, r) * kappa.eval(r)).sum()
                } else {
                    0.0
                };
                direct + tail
            };
            let z = TriangleKernel::from_fn(g, |t, s| term(t, s, b, kappa_b_fn));
            let base = TriangleKernel::from_fn(g, |t, s| term(t, s, c, kappa_n_fn));
            let k = match &spec.levy {
                Some(l) => l
                    .atoms
                    .iter()
                    .map(|a| TriangleKernel {
                        grid: g,
                        rows: base.rows.iter().map(|r| r.iter().map(|v| a.zeta * v).collect()).collect(),
                    })
                    .collect(),
                None => vec![],
            };
            Ok(ZkSolution { z, k })
        }
        _ => Err(ChaosError::Unsupported("Z/K retrieval needs the closed-form affine solution".into())),
    }
}

/// `U(t) = F(t) + ∫_t^T Φ(t,r)Y(r)dr − Y(t)` per path on the grid.
pub fn auxiliary_u(spec: &BsvieSpec, sol: &BsvieSolution, ens: &McEnsemble) -> Vec<f64> {
    let g = spec.grid;
    let p = g.len();
    let phi = TriangleKernel::from_fn(g, |t, r| spec.phi.eval(t, r));
    let mut u = vec![0.0; sol.n_paths * p];
    u.par_chunks_mut(p).enumerate().for_each(|(path, out)| {
        let f = free_path(spec, ens, path);
        let y = sol.y_path(path);
        for i in 0..=g.steps {
            let w = quadrature_weights(g.steps - i, g.dt());
            let int: f64 = (i..=g.steps).map(|j| w[j - i] * phi.get(i, j) * y[j]).sum();
            out[i] = f[i] + int - y[i];
        }
    });
    u
}

/// Residual of the original equation on simulated paths.
#[derive(Clone, Debug, Serialize)]
pub struct EquationResidual {
    /// Mean residual with its standard error at each grid time.
    pub per_t: Vec<Estimate>,
    /// `sqrt(mean over t and paths of residual²)`.
    pub l2: f64,
    /// Every `per_t` mean within 3σ of 0 (plus 1e−9).
    pub mean_zero: bool,
}

/// Substitutes `(Y, Z, K)` into the equation on every path.
pub fn equation_residual(
    spec: &BsvieSpec,
    sol: &BsvieSolution,
    zk: &ZkSolution,
    ens: &McEnsemble,
) -> Result<EquationResidual> {
    let xi = spec.xi_det().ok_or_else(|| ChaosError::Unsupported("residual needs a deterministic drift ξ".into()))?;
    let g = spec.grid;
    let m = g.steps;
    let h = g.dt();
    let atoms = spec.atoms();
    let nus: Vec<(f64, f64)> =
        spec.levy.as_ref().map(|l| l.atoms.iter().map(|a| (a.zeta, a.nu)).collect()).unwrap_or_default();
    let phi = TriangleKernel::from_fn(g, |t, r| spec.phi.eval(t, r));
    // deterministic drift ∫_t^T [ξZ + Σ βKν] ds and compensator ∫_t^T Σ Kν ds, per row
    let mut drift = vec![0.0; m + 1];
    let mut comp = vec![0.0; m + 1];
    for i in 0..m {
        let w = quadrature_weights(m - i, h);
        for j in i..=m {
            let s = g.t(j);
            let mut d = xi(s) * zk.z.get(i, j);
            let mut c = 0.0;
            for a in 0..atoms {
                d += spec.beta[a](s) * zk.k[a].get(i, j) * nus[a].1;
                c += zk.k[a].get(i, j) * nus[a].1;
            }
            drift[i] += w[j - i] * d;
            comp[i] += w[j - i] * c;
        }
    }
    let n = sol.n_paths;
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|path| {
            let f = free_path(spec, ens, path);
            let y = sol.y_path(path);
            let b = ens.brownian(path);
            (0..=m)
                .map(|i| {
                    let w = quadrature_weights(m - i, h);
                    let py: f64 = (i..=m).map(|j| w[j - i] * phi.get(i, j) * y[j]).sum();
                    let zdb: f64 =
                        (i..m).map(|j| 0.5 * (zk.z.get(i, j) + zk.z.get(i, j + 1)) * (b[j + 1] - b[j])).sum();
                    let mut kdn = -comp[i];
                    for jump in ens.jumps(path) {
                        if jump.time > g.t(i) {
                            let x = (jump.time / h).min(m as f64);
                            let j = (x.floor() as usize).clamp(i, m - 1);
                            let u = x - j as f64;
                            let kk = &zk.k[jump.atom];
                            kdn += (1.0 - u) * kk.get(i, j) + u * kk.get(i, j + 1);
                        }
                    }
                    y[i] - f[i] - py - drift[i] + zdb + kdn
                })
                .collect()
        })
        .collect();
    let per_t: Vec<Estimate> = (0..=m).map(|i| Estimate::of(&rows.iter().map(|r| r[i]).collect::<Vec<_>>())).collect();
    let l2 = (rows.iter().flatten().map(|v| v * v).sum::<f64>() / (n * (m + 1)) as f64).sqrt();
    let mean_zero = per_t.iter().all(|e| e.within(0.0, 3.0, 1e-9));
    Ok(EquationResidual { per_t, l2, mean_zero })
}

/// Regression of the closed form against its Bayes-weighted estimate.
#[derive(Clone, Debug, Serialize)]
pub struct BayesCrossCheck {
    /// Per grid time, RMS over paths of `Y_regression − Y_closed`.
    pub rms: Vec<f64>,
    /// Per grid time, RMS over paths of `Y_closed − E[Y_closed]`, for scale.
    pub spread: Vec<f64>,
}

pub fn bayes_cross_check(
    spec: &BsvieSpec,
    res: &Resolvent,
    ens: &McEnsemble,
    degree: usize,
) -> Result<BayesCrossCheck> {
    let closed = bsvie_solve_y(spec, res, ens)?;
    let reg = bsvie_solve_y_regression(spec, res, ens, degree)?;
    let n = ens.n_paths() as f64;
    let mut rms = vec![];
    let mut spread = vec![];
    for i in 0..=spec.grid.steps {
        let c = closed.y_at(i);
        let r = reg.y_at(i);
        let mean = c.iter().sum::<f64>() / n;
        rms.push((c.iter().zip(&r).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n).sqrt());
        spread.push((c.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n).sqrt());
    }
    Ok(BayesCrossCheck { rms, spread })
}

/// Discrete `Σ_t Σ_{s>t} (∂Z/∂t)² Δs Δt` (plus the `K` analogue weighted by
/// `ν`) over a sequence of grid refinements.
#[derive(Clone, Debug, Serialize)]
pub struct SmoothnessReport {
    pub steps: Vec<usize>,
    pub energy: Vec<f64>,
    pub finite: bool,
    /// Successive differences shrink.
    pub stable: bool,
}

/// Rebuilds `spec` on each grid through `make` and measures the energy of the
/// `t`-derivative of `Z` and `K` by forward differences.
pub fn smoothness_report(
    make: impl Fn(TimeGrid) -> Result<BsvieSpec>,
    horizon: f64,
    steps: &[usize],
    tol: f64,
) -> Result<SmoothnessReport> {
    let mut energy = vec![];
    for &m in steps {
        let grid = TimeGrid::new(horizon, m)?;
        let spec = make(grid)?;
        let res = resolvent_psi(&spec.phi, grid, tol)?;
        let ens = crate::mc::build_ensemble(0, 2, 1, grid, spec.levy.as_ref())?;
        let sol = bsvie_solve_y(&spec, &res, &ens)?;
        let zk = bsvie_solve_zk(&spec, &sol)?;
        let h = grid.dt();
        let nus: Vec<f64> = spec.levy.as_ref().map(|l| l.atoms.iter().map(|a| a.nu).collect()).unwrap_or_default();
        let mut e = 0.0;
        for i in 0..m {
            for j in (i + 1)..=m {
                let dz = (zk.z.get(i + 1, j) - zk.z.get(i, j)) / h;
                let mut v = dz * dz;
                for (a, k) in zk.k.iter().enumerate() {
                    let dk = (k.get(i + 1, j) - k.get(i, j)) / h;
                    v += dk * dk * nus[a];
                }
                e += v * h * h;
            }
        }
        energy.push(e);
    }
    let finite = energy.iter().all(|e| e.is_finite());
    let diffs: Vec<f64> = energy.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let stable = diffs.windows(2).all(|d| d[1] <= d[0] + 1e-12);
    Ok(SmoothnessReport { steps: steps.to_vec(), energy, finite, stable })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mc::{build_ensemble, Atom};

    fn grid(m: usize) -> TimeGrid {
        TimeGrid::new(1.0, m).unwrap()
    }

    #[test]
    fn constant_one_iterates() {
        let g = grid(16);
        let k = VolterraKernel::constant(1.0);
        for n in 1..=5 {
            let phi = resolvent_phi_n(&k, g, n).unwrap();
            let fact: f64 = (1..n).map(|k| k as f64).product();
            let want = TriangleKernel::from_fn(g, |t, r| (r - t).powi(n as i32 - 1) / fact);
            assert!(phi.max_abs_diff(&want) < 1e-12, "n = {n}");
        }
    }

    #[test]
    fn exp_kernel_resolvent_is_one() {
        let g = grid(64);
        let res = resolvent_psi(&VolterraKernel::exp_decay(1.0, 1.0), g, 1e-12).unwrap();
        let one = TriangleKernel::from_fn(g, |_, _| 1.0);
        assert!(res.psi_grid().max_abs_diff(&one) < 1e-8);
        assert!(res.identity_defect() < 1e-11);
        let rep = res.bound_report();
        assert!(rep.violations.is_empty());
        assert!(rep.quoted_violations.contains(&3));
    }

    #[test]
    fn constant_kernel_resolvent() {
        let g = grid(32);
        let c = 0.7;
        let res = resolvent_psi(&VolterraKernel::constant(c), g, 1e-12).unwrap();
        let want = TriangleKernel::from_fn(g, |t, r| c * (c * (r - t)).exp());
        assert!(res.psi_grid().max_abs_diff(&want) < 1e-10);
    }

    #[test]
    fn zero_kernel() {
        let g = grid(8);
        let res = resolvent_psi(&VolterraKernel::zero(), g, 1e-12).unwrap();
        assert_eq!(res.psi_grid().max_abs(), 0.0);
        assert_eq!(resolvent_phi_n(&VolterraKernel::zero(), g, 3).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn deterministic_y_exp_kernel() {
        let g = grid(32);
        let spec = BsvieSpec::deterministic(g, VolterraKernel::exp_decay(1.0, 1.0), constant_fn(1.0));
        let res = resolvent_psi(&spec.phi, g, 1e-12).unwrap();
        let ens = build_ensemble(1, 4, 2, g, None).unwrap();
        let sol = bsvie_solve_y(&spec, &res, &ens).unwrap();
        for i in 0..=32 {
            assert!((sol.y_path(3)[i] - (2.0 - g.t(i))).abs() < 1e-10);
        }
        assert!(deterministic_residual(&spec, &sol).unwrap() < 1e-10);
    }

    #[test]
    fn tabulated_matches_closure() {
        let g = grid(8);
        let rows: Vec<Vec<f64>> = (0..=8).map(|i| (i..=8).map(|j| 1.0 + g.t(i) + 2.0 * g.t(j)).collect()).collect();
        let k = VolterraKernel::tabulated(g, rows).unwrap();
        assert!((k.eval(0.3, 0.71) - (1.0 + 0.3 + 1.42)).abs() < 1e-12);
        assert_eq!(k.bound(), 4.0);
    }

    #[test]
    fn preset_parsing_is_strict() {
        let p: KernelPreset = serde_json::from_str(r#"{"kind":"exp-decay","rate":2.0}"#).unwrap();
        assert_eq!(p, KernelPreset::ExpDecay { scale: 1.0, rate: 2.0 });
        assert!(serde_json::from_str::<KernelPreset>(r#"{"kind":"constant","value":1,"extra":0}"#).is_err());
    }

    #[test]
    fn trivial_girsanov_is_one() {
        let g = grid(8);
        let levy = LevyModel::new(vec![Atom { zeta: 0.5, nu: 1.0 }]).unwrap();
        let mut spec = BsvieSpec::deterministic(g, VolterraKernel::zero(), constant_fn(0.0));
        spec.levy = Some(levy.clone());
        spec.beta = vec![constant_fn(0.0)];
        let ens = build_ensemble(3, 50, 4, g, Some(&levy)).unwrap();
        let gir = girsanov_build(&spec, &ens).unwrap();
        assert!(gir.m.iter().all(|&m| (m - 1.0).abs() < 1e-15));
        spec.beta = vec![constant_fn(-1.0)];
        assert!(matches!(girsanov_build(&spec, &ens), Err(ChaosError::Domain(_))));
    }

    #[test]
    fn pinned_brownian_free_term() {
        // Φ = 0, F(t) = B(t): Y = B, Z(t, s) = 0 for s > t
        let g = grid(16);
        let mut spec = BsvieSpec::deterministic(g, VolterraKernel::zero(), constant_fn(0.0));
        spec.free =
            FreeTerm::Affine { a: constant_fn(0.0), b: constant_fn(1.0), c: constant_fn(0.0), pin: Pin::Current };
        let res = resolvent_psi(&spec.phi, g, 1e-12).unwrap();
        let ens = build_ensemble(5, 20, 4, g, None).unwrap();
        let sol = bsvie_solve_y(&spec, &res, &ens).unwrap();
        for p in 0..20 {
            for i in 0..=16 {
                assert!((sol.y_path(p)[i] - ens.brownian(p)[i]).abs() < 1e-14);
            }
        }
        let zk = bsvie_solve_zk(&spec, &sol).unwrap();
        assert_eq!(zk.z.max_abs(), 0.0);
    }
}

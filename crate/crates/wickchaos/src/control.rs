//! Stochastic maximum principle: Hamiltonians, the constrained
//! linear-quadratic jump-diffusion problem, and the log-utility cash-flow
//! problem for a controlled Volterra equation.
//!
//! Conditional expectations given `F_t` are regressions on the Markov state
//! (full information).

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bsde::TerminalAffine;
use crate::bsvie::{
    bsvie_solve_y, bsvie_solve_zk, resolvent_psi, BsvieSolution, BsvieSpec, Drift, FreeTerm, Pin, TimeFn, TwoTimeFn,
    VolterraKernel, ZkSolution,
};
use crate::chaos::{gauss_legendre_on, TimeGrid};
use crate::error::{ChaosError, Result};
use crate::mc::{regress_on, Estimate, LevyModel, McEnsemble};

/// Coefficients `f, b, σ, γ` of a controlled jump diffusion.
pub trait ControlCoefficients {
    fn f(&self, t: f64, x: f64, u: f64) -> f64;
    fn b(&self, t: f64, x: f64, u: f64) -> f64;
    fn sigma(&self, t: f64, x: f64, u: f64) -> f64;
    fn gamma(&self, t: f64, x: f64, u: f64, atom: usize) -> f64;
    fn levy(&self) -> Option<&LevyModel>;
}

/// `H = f + b p + σ q + Σ_ζ γ(ζ) r(ζ) ν(ζ)`.
pub fn hamiltonian(c: &impl ControlCoefficients, t: f64, x: f64, u: f64, p: f64, q: f64, r: &[f64]) -> f64 {
    let mut h = c.f(t, x, u) + c.b(t, x, u) * p + c.sigma(t, x, u) * q;
    if let Some(l) = c.levy() {
        for (a, atom) in l.atoms.iter().enumerate() {
            h += c.gamma(t, x, u, a) * r.get(a).copied().unwrap_or(0.0) * atom.nu;
        }
    }
    h
}

/// `dX = u dt + σ dB + ∫γ(ζ) Ñ(dt,dζ)`, maximise `E[−½X(T)² − ½∫u²dt]`,
/// optionally over `u ≥ 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct LqProblem {
    pub x0: f64,
    pub sigma: f64,
    /// `γ(ζ)` per atom.
    pub gamma: Vec<f64>,
    pub grid: TimeGrid,
    pub levy: Option<LevyModel>,
    pub constrained: bool,
}

impl ControlCoefficients for LqProblem {
    fn f(&self, _t: f64, _x: f64, u: f64) -> f64 {
        -0.5 * u * u
    }
    fn b(&self, _t: f64, _x: f64, u: f64) -> f64 {
        u
    }
    fn sigma(&self, _t: f64, _x: f64, _u: f64) -> f64 {
        self.sigma
    }
    fn gamma(&self, _t: f64, _x: f64, _u: f64, atom: usize) -> f64 {
        self.gamma[atom]
    }
    fn levy(&self) -> Option<&LevyModel> {
        self.levy.as_ref()
    }
}

impl LqProblem {
    pub fn validate(&self) -> Result<()> {
        let atoms = self.levy.as_ref().map(|l| l.len()).unwrap_or(0);
        if self.gamma.len() != atoms {
            return Err(ChaosError::InvalidArgument(format!("γ has {} entries for {atoms} atoms", self.gamma.len())));
        }
        if !self.x0.is_finite() || !self.sigma.is_finite() || self.gamma.iter().any(|g| !g.is_finite()) {
            return Err(ChaosError::InvalidArgument("LQ coefficients must be finite".into()));
        }
        Ok(())
    }

    /// `∂H/∂u = −u + p`.
    pub fn dh_du(&self, u: f64, p: f64) -> f64 {
        -u + p
    }
}

/// Paths of `X` under a control, and the per-path values of `u` used.
#[derive(Clone, Debug)]
pub struct LqPaths {
    pub grid: TimeGrid,
    pub n_paths: usize,
    /// `X(t_i)`, row-major by path.
    pub x: Vec<f64>,
    /// `u(t_i)`, row-major by path; the value at `T` is not used by the dynamics.
    pub u: Vec<f64>,
}

impl LqPaths {
    pub fn x_path(&self, p: usize) -> &[f64] {
        let w = self.grid.len();
        &self.x[p * w..(p + 1) * w]
    }

    pub fn u_path(&self, p: usize) -> &[f64] {
        let w = self.grid.len();
        &self.u[p * w..(p + 1) * w]
    }

    pub fn x_at(&self, i: usize) -> Vec<f64> {
        (0..self.n_paths).map(|p| self.x_path(p)[i]).collect()
    }

    pub fn u_at(&self, i: usize) -> Vec<f64> {
        (0..self.n_paths).map(|p| self.u_path(p)[i]).collect()
    }
}

/// Noise increments per cell: `σΔB + Σ γ ΔN − Σ γ ν Δt`.
fn lq_noise(problem: &LqProblem, ens: &McEnsemble, path: usize) -> Vec<f64> {
    let g = problem.grid;
    let b = ens.brownian(path);
    let mut out: Vec<f64> = (0..g.steps).map(|i| problem.sigma * (b[i + 1] - b[i])).collect();
    if let Some(l) = &problem.levy {
        let comp: f64 = l.atoms.iter().zip(&problem.gamma).map(|(a, gm)| gm * a.nu).sum::<f64>() * g.dt();
        for o in out.iter_mut() {
            *o -= comp;
        }
        for j in ens.jumps(path) {
            out[g.cell_of(j.time)] += problem.gamma[j.atom];
        }
    }
    out
}

/// Euler simulation with `u(t_i) = control(path, i, X(t_i))`.
pub fn simulate_lq(
    problem: &LqProblem,
    ens: &McEnsemble,
    control: impl Fn(usize, usize, f64) -> f64 + Sync,
) -> Result<LqPaths> {
    problem.validate()?;
    if ens.grid() != &problem.grid {
        return Err(ChaosError::InvalidArgument("ensemble grid differs from the problem grid".into()));
    }
    let g = problem.grid;
    let w = g.len();
    let n = ens.n_paths();
    let mut x = vec![0.0; n * w];
    let mut u = vec![0.0; n * w];
    x.par_chunks_mut(w).zip(u.par_chunks_mut(w)).enumerate().for_each(|(p, (xr, ur))| {
        let noise = lq_noise(problem, ens, p);
        xr[0] = problem.x0;
        for i in 0..g.steps {
            ur[i] = control(p, i, xr[i]);
            xr[i + 1] = xr[i] + ur[i] * g.dt() + noise[i];
        }
        ur[g.steps] = control(p, g.steps, xr[g.steps]);
    });
    Ok(LqPaths { grid: g, n_paths: n, x, u })
}

/// `J = E[−½X(T)² − ½Σ u(t_i)² Δt]` with its standard error.
pub fn lq_objective(paths: &LqPaths) -> Estimate {
    let g = paths.grid;
    let samples: Vec<f64> = (0..paths.n_paths)
        .map(|p| {
            let x = paths.x_path(p)[g.steps];
            let u = paths.u_path(p);
            -0.5 * x * x - 0.5 * u[..g.steps].iter().map(|v| v * v).sum::<f64>() * g.dt()
        })
        .collect();
    Estimate::of(&samples)
}

/// Regression of `−X(T)` on the state at each grid time: cubic in `X(t)`
/// plus a linear jump-count term.
#[derive(Clone, Debug)]
pub struct AdjointFit {
    /// `p̂(t_i)` row-major by path.
    pub p: Vec<f64>,
    /// Per grid time, `residual_sd · sqrt(q/n)`: the size of the fitting noise.
    pub stderr: Vec<f64>,
}

pub fn fit_adjoint(problem: &LqProblem, ens: &McEnsemble, paths: &LqPaths) -> Result<AdjointFit> {
    let g = problem.grid;
    let n = paths.n_paths;
    let w = g.len();
    let target: Vec<f64> = (0..n).map(|p| -paths.x_path(p)[g.steps]).collect();
    let mut p_hat = vec![0.0; n * w];
    let mut stderr = vec![0.0; w];
    for i in 0..=g.steps {
        let (fitted, se) = if i == g.steps {
            (target.clone(), 0.0)
        } else {
            let x = paths.x_at(i);
            let xs = standardized(&x);
            let cs = if problem.levy.is_some() {
                let t = g.t(i);
                standardized(&(0..n).map(|p| ens.jump_state(p, t).1 as f64).collect::<Vec<_>>())
            } else {
                None
            };
            let reg = fit_state(&target, xs, cs).map_err(|e| match e {
                ChaosError::RankDeficient(_) => ChaosError::RankDeficient(i),
                other => other,
            })?;
            let q = reg.coefficients.len() as f64;
            let se = reg.residual_sd * (q / n as f64).sqrt();
            (reg.fitted, se)
        };
        for p in 0..n {
            p_hat[p * w + i] = fitted[p];
        }
        stderr[i] = se;
    }
    Ok(AdjointFit { p: p_hat, stderr })
}

/// Cubic in `x` plus linear in the count; falls back to smaller bases when
/// the design is singular (for instance when `X` is a function of the count).
fn fit_state(target: &[f64], xs: Option<Vec<f64>>, cs: Option<Vec<f64>>) -> Result<crate::mc::Regression> {
    let cubic = |nf: usize, deg: u32| {
        (1..=deg).map(move |d| {
            let mut m = vec![0; nf];
            m[0] = d;
            m
        })
    };
    let mut attempts: Vec<(Vec<Vec<f64>>, Vec<Vec<u32>>)> = vec![];
    match (&xs, &cs) {
        (Some(x), Some(c)) => {
            let mut mons = vec![vec![0, 0]];
            mons.extend(cubic(2, 3));
            mons.push(vec![0, 1]);
            attempts.push((vec![x.clone(), c.clone()], mons));
        }
        _ => {}
    }
    if let Some(x) = &xs {
        for deg in [3, 1] {
            let mut mons = vec![vec![0]];
            mons.extend(cubic(1, deg));
            attempts.push((vec![x.clone()], mons));
        }
    }
    if let Some(c) = &cs {
        attempts.push((vec![c.clone()], vec![vec![0], vec![1]]));
    }
    attempts.push((vec![], vec![vec![]]));
    let mut last = ChaosError::RankDeficient(0);
    for (features, mons) in attempts {
        match regress_on(target, &features, mons, None) {
            Ok(r) => return Ok(r),
            Err(e @ ChaosError::RankDeficient(_)) => last = e,
            Err(e) => return Err(e),
        }
    }
    Err(last)
}

/// Centred and scaled copy, or `None` for a constant feature.
fn standardized(v: &[f64]) -> Option<Vec<f64>> {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    if sd <= 1e-12 * (1.0 + mean.abs()) {
        None
    } else {
        Some(v.iter().map(|x| (x - mean) / sd).collect())
    }
}

/// One Picard step's diagnostics.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub objective: Estimate,
    /// `max_t sqrt(mean over paths of (u^{m+1} − u^m)²)` before damping.
    pub sup_change: f64,
}

/// Result of [`lq_solve`].
#[derive(Clone, Debug)]
pub struct ControlIterate {
    /// `û`, `X̂` on every path.
    pub paths: LqPaths,
    /// `p̂` that defines `û = max(p̂, 0)`.
    pub p: Vec<f64>,
    pub p_stderr: Vec<f64>,
    pub iteration: usize,
    pub sup_change: f64,
    pub converged: bool,
    pub objective: Estimate,
    pub history: Vec<IterationRecord>,
}

/// Default Picard damping.
pub const DAMPING: f64 = 0.5;

/// Picard iteration on `û = max(p̂, 0)`, `p̂(t) = −E[X̂(T) | F_t]`.
///
/// `u^{m+1} = (1 − λ) u^m + λ max(p̂^m, 0)` until the undamped change drops
/// below `tol`; the returned control is the undamped `max(p̂, 0)`. Without the
/// constraint the projection is skipped.
pub fn lq_solve(problem: &LqProblem, ens: &McEnsemble, max_iter: usize, tol: f64) -> Result<ControlIterate> {
    lq_solve_damped(problem, ens, max_iter, tol, DAMPING)
}

pub fn lq_solve_damped(
    problem: &LqProblem,
    ens: &McEnsemble,
    max_iter: usize,
    tol: f64,
    lambda: f64,
) -> Result<ControlIterate> {
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(ChaosError::InvalidArgument(format!("damping must lie in (0, 1], got {lambda}")));
    }
    let g = problem.grid;
    let w = g.len();
    let n = ens.n_paths();
    let project = |v: f64| if problem.constrained { v.max(0.0) } else { v };
    let mut u = vec![0.0; n * w];
    let mut history = vec![];
    let mut converged = false;
    let mut last_change = f64::INFINITY;
    let mut target = vec![0.0; n * w];
    let mut fit = AdjointFit { p: vec![0.0; n * w], stderr: vec![0.0; w] };
    let mut iteration = 0;
    for m in 0..max_iter.max(1) {
        iteration = m + 1;
        let paths = simulate_lq(problem, ens, |p, i, _| u[p * w + i])?;
        fit = fit_adjoint(problem, ens, &paths)?;
        target = fit.p.iter().map(|&v| project(v)).collect();
        last_change = (0..w)
            .map(|i| ((0..n).map(|p| (target[p * w + i] - u[p * w + i]).powi(2)).sum::<f64>() / n as f64).sqrt())
            .fold(0.0, f64::max);
        history.push(IterationRecord { iteration: m, objective: lq_objective(&paths), sup_change: last_change });
        if last_change < tol {
            converged = true;
            break;
        }
        for (ui, ti) in u.iter_mut().zip(&target) {
            *ui = (1.0 - lambda) * *ui + lambda * ti;
        }
    }
    let paths = simulate_lq(problem, ens, |p, i, _| target[p * w + i])?;
    let objective = lq_objective(&paths);
    Ok(ControlIterate {
        paths,
        p: fit.p,
        p_stderr: fit.stderr,
        iteration,
        sup_change: last_change,
        converged,
        objective,
        history,
    })
}

/// Closed-loop `u*(t) = −X(t)/(T + 1 − t)`, packaged as an iterate with the
/// regressed adjoint.
pub fn unconstrained_benchmark(problem: &LqProblem, ens: &McEnsemble) -> Result<ControlIterate> {
    let g = problem.grid;
    let paths = simulate_lq(problem, ens, |_, i, x| -x / (g.horizon + 1.0 - g.t(i)))?;
    let fit = fit_adjoint(problem, ens, &paths)?;
    let objective = lq_objective(&paths);
    Ok(ControlIterate {
        paths,
        p: fit.p,
        p_stderr: fit.stderr,
        iteration: 0,
        sup_change: 0.0,
        converged: true,
        objective,
        history: vec![],
    })
}

/// Stationarity diagnostics at one grid time.
#[derive(Clone, Debug, Serialize)]
pub struct StationarityRow {
    pub t: f64,
    /// `E[(−û + p̂)(v − û)]` for each test value `v`.
    pub products: Vec<Estimate>,
    /// RMS of `p̂ − û` over paths with `û > 0`.
    pub interior_residual: f64,
    pub interior_fraction: f64,
    /// Largest `p̂` over paths with `û = 0`.
    pub boundary_max: f64,
    pub boundary_tol: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct StationarityReport {
    pub rows: Vec<StationarityRow>,
    pub interior_tol: f64,
    pub pass: bool,
}

/// Checks `(−û + p̂)(v − û) ≤ 0` for test values `v ≥ 0`, with `p̂` refitted on
/// the paths driven by `û`. The allowance is three standard errors of the
/// product, counting the fitting noise of `p̂`. Interior points need `|p̂ − û| ≤ interior_tol`
/// (plus three fitting standard errors); boundary points need `p̂ ≤ 3σ`.
pub fn stationarity_check(
    problem: &LqProblem,
    iterate: &ControlIterate,
    ens: &McEnsemble,
    v_grid: &[f64],
    interior_tol: f64,
) -> Result<StationarityReport> {
    let g = problem.grid;
    let w = g.len();
    let n = iterate.paths.n_paths;
    let fit = fit_adjoint(problem, ens, &iterate.paths)?;
    let mut rows = vec![];
    for i in 0..g.steps {
        let u = iterate.paths.u_at(i);
        let p: Vec<f64> = (0..n).map(|k| fit.p[k * w + i]).collect();
        let products: Vec<Estimate> = v_grid
            .iter()
            .map(|&v| Estimate::of(&u.iter().zip(&p).map(|(u, p)| (-u + p) * (v - u)).collect::<Vec<_>>()))
            .collect();
        let mut sq = 0.0;
        let mut n_int = 0usize;
        let mut bmax = f64::NEG_INFINITY;
        for (u, p) in u.iter().zip(&p) {
            if *u > 0.0 {
                sq += (p - u).powi(2);
                n_int += 1;
            } else {
                bmax = bmax.max(*p);
            }
        }
        let interior_residual = if n_int > 0 { (sq / n_int as f64).sqrt() } else { 0.0 };
        let se = fit.stderr[i];
        let boundary_tol = 3.0 * se;
        // σ of each product: path noise plus the fitting noise of p̂ carried by |v − û|
        let pass_products = v_grid.iter().zip(&products).all(|(&v, e)| {
            let lever = u.iter().map(|u| (v - u).abs()).sum::<f64>() / n as f64;
            e.estimate <= 3.0 * (e.stderr.powi(2) + (se * lever).powi(2)).sqrt() + 1e-12
        });
        let pass = pass_products
            && interior_residual <= interior_tol + 3.0 * se
            && (bmax == f64::NEG_INFINITY || bmax <= boundary_tol);
        rows.push(StationarityRow {
            t: g.t(i),
            products,
            interior_residual,
            interior_fraction: n_int as f64 / n as f64,
            boundary_max: bmax,
            boundary_tol,
            pass,
        });
    }
    let pass = rows.iter().all(|r| r.pass);
    Ok(StationarityReport { rows, interior_tol, pass })
}

/// Coefficients of a controlled stochastic Volterra equation
/// `X(t) = x₀ + ∫_0^t b(t,s,X,u) ds + ∫_0^t σ(t,s,X,u) dB + ∫∫ γ(t,s,X,u,ζ) Ñ(ds,dζ)`
/// with running reward `f`. Derivatives are in the first time argument.
pub trait SvieCoefficients {
    fn f(&self, t: f64, x: f64, u: f64) -> f64;
    fn b(&self, t: f64, s: f64, x: f64, u: f64) -> f64;
    fn db_dt(&self, t: f64, s: f64, x: f64, u: f64) -> f64;
    fn sigma(&self, t: f64, s: f64, x: f64, u: f64) -> f64;
    fn dsigma_dt(&self, t: f64, s: f64, x: f64, u: f64) -> f64;
    fn gamma(&self, t: f64, s: f64, x: f64, u: f64, atom: usize) -> f64;
    fn dgamma_dt(&self, t: f64, s: f64, x: f64, u: f64, atom: usize) -> f64;
    fn levy(&self) -> Option<&LevyModel>;
    fn horizon(&self) -> f64;
}

/// Adjoint values as functions: `p(s)`, `q(s, t)`, `r(s, t, atom)`.
pub struct Adjoints<'a> {
    pub p: &'a dyn Fn(f64) -> f64,
    pub q: &'a dyn Fn(f64, f64) -> f64,
    pub r: &'a dyn Fn(f64, f64, usize) -> f64,
}

const H1_NODES: usize = 24;

/// `ℋ = H⁰ + H¹`, with
/// `H⁰ = f + p(t)b(t,t) + q(t,t)σ(t,t) + Σ r(t,t,ζ)γ(t,t,ζ)ν` and
/// `H¹ = ∫_t^T [p(s)∂b(s,t) + q(s,t)∂σ(s,t) + Σ r(s,t,ζ)∂γ(s,t,ζ)ν] ds`.
pub fn svie_hamiltonian(c: &impl SvieCoefficients, t: f64, x: f64, u: f64, adj: &Adjoints<'_>) -> f64 {
    let nus: Vec<f64> = c.levy().map(|l| l.atoms.iter().map(|a| a.nu).collect()).unwrap_or_default();
    let mut h0 = c.f(t, x, u) + (adj.p)(t) * c.b(t, t, x, u) + (adj.q)(t, t) * c.sigma(t, t, x, u);
    for (a, nu) in nus.iter().enumerate() {
        h0 += (adj.r)(t, t, a) * c.gamma(t, t, x, u, a) * nu;
    }
    let big_t = c.horizon();
    if big_t <= t {
        return h0;
    }
    let (xs, ws) = gauss_legendre_on(H1_NODES, t, big_t);
    let h1: f64 = xs
        .iter()
        .zip(&ws)
        .map(|(&s, &w)| {
            let mut v = (adj.p)(s) * c.db_dt(s, t, x, u) + (adj.q)(s, t) * c.dsigma_dt(s, t, x, u);
            for (a, nu) in nus.iter().enumerate() {
                v += (adj.r)(s, t, a) * c.dgamma_dt(s, t, x, u, a) * nu;
            }
            w * v
        })
        .sum();
    h0 + h1
}

/// `X(t) = x₀ + ∫[b₀(t,s)X(s) − u(s)]ds + ∫σ₀(s)X(s)dB(s) + ∫∫γ₀(s,ζ)X(s)Ñ(ds,dζ)`,
/// maximise `E[θX(T) + ∫ log u dt]`.
#[derive(Clone)]
pub struct CashflowSpec {
    pub grid: TimeGrid,
    pub x0: f64,
    pub b0: TwoTimeFn,
    /// `∂b₀/∂t` in the first argument.
    pub db0_dt: TwoTimeFn,
    pub sigma0: TimeFn,
    /// `γ₀(s, ζ)` per atom.
    pub gamma0: Vec<TimeFn>,
    pub theta: TerminalAffine,
    pub levy: Option<LevyModel>,
}

impl std::fmt::Debug for CashflowSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CashflowSpec")
            .field("grid", &self.grid)
            .field("x0", &self.x0)
            .field("theta", &self.theta)
            .finish()
    }
}

impl SvieCoefficients for CashflowSpec {
    fn f(&self, _t: f64, _x: f64, u: f64) -> f64 {
        u.ln()
    }
    fn b(&self, t: f64, s: f64, x: f64, u: f64) -> f64 {
        (self.b0)(t, s) * x - u
    }
    fn db_dt(&self, t: f64, s: f64, x: f64, _u: f64) -> f64 {
        (self.db0_dt)(t, s) * x
    }
    fn sigma(&self, _t: f64, s: f64, x: f64, _u: f64) -> f64 {
        (self.sigma0)(s) * x
    }
    fn dsigma_dt(&self, _t: f64, _s: f64, _x: f64, _u: f64) -> f64 {
        0.0
    }
    fn gamma(&self, _t: f64, s: f64, x: f64, _u: f64, atom: usize) -> f64 {
        (self.gamma0[atom])(s) * x
    }
    fn dgamma_dt(&self, _t: f64, _s: f64, _x: f64, _u: f64, _atom: usize) -> f64 {
        0.0
    }
    fn levy(&self) -> Option<&LevyModel> {
        self.levy.as_ref()
    }
    fn horizon(&self) -> f64 {
        self.grid.horizon
    }
}

impl CashflowSpec {
    pub fn validate(&self) -> Result<()> {
        let atoms = self.levy.as_ref().map(|l| l.len()).unwrap_or(0);
        if self.gamma0.len() != atoms {
            return Err(ChaosError::InvalidArgument(format!("γ₀ has {} entries for {atoms} atoms", self.gamma0.len())));
        }
        Ok(())
    }

    /// Kernel of the adjoint equation, `Φ(t,s) = b₀(s,s) + ∫_t^s ∂b₀/∂t(s,v) dv`.
    pub fn adjoint_kernel(&self) -> VolterraKernel {
        let b0 = self.b0.clone();
        let db = self.db0_dt.clone();
        let f = move |t: f64, s: f64| {
            let mut v = b0(s, s);
            if s > t {
                let (x, w) = gauss_legendre_on(16, t, s);
                v += x.iter().zip(&w).map(|(&z, &wz)| wz * db(s, z)).sum::<f64>();
            }
            v
        };
        // bound from a sampled triangle with a margin
        let big_t = self.grid.horizon;
        let mut c = 0.0f64;
        for i in 0..=64 {
            for j in i..=64 {
                c = c.max(f(big_t * i as f64 / 64.0, big_t * j as f64 / 64.0).abs());
            }
        }
        VolterraKernel::from_fn(f, 1.05 * c + 1e-12)
    }

    /// Adjoint equation `p(t) = θ + ∫_t^T ∂ℋ/∂x ds − ∫q dB − ∫∫r Ñ` in the
    /// linear Volterra form, with `q(s,s)` read as `q(t,s)`.
    pub fn adjoint_spec(&self) -> BsvieSpec {
        BsvieSpec {
            grid: self.grid,
            phi: self.adjoint_kernel(),
            xi_drift: Drift::Deterministic(self.sigma0.clone()),
            beta: self.gamma0.clone(),
            free: FreeTerm::Affine {
                a: crate::bsvie::constant_fn(self.theta.c0),
                b: crate::bsvie::constant_fn(self.theta.c_b),
                c: crate::bsvie::constant_fn(self.theta.c_n),
                pin: Pin::Terminal,
            },
            levy: self.levy.clone(),
        }
    }
}

/// Concavity facts behind the sufficient maximum principle.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConcavityReport {
    /// `u ↦ log u` is strictly concave.
    pub running_reward_strictly_concave: bool,
    /// `x ↦ θx` is linear.
    pub terminal_reward_concave: bool,
    /// `ℋ` is affine in `x` and strictly concave in `u`.
    pub hamiltonian_concave: bool,
}

#[derive(Clone, Debug)]
pub struct CashflowSolution {
    pub adjoint: BsvieSolution,
    pub zk: ZkSolution,
    /// `û = 1/p̂`, row-major by path.
    pub u: Vec<f64>,
    /// `X̂` under `û`.
    pub x: Vec<f64>,
    pub objective: Estimate,
    /// `max |1/û − p̂|`.
    pub first_order_residual: f64,
    /// `max |∂ℋ/∂u|` at `û`, by central differences of the Hamiltonian.
    pub hamiltonian_gradient: f64,
    pub concavity: ConcavityReport,
}

/// Solves the adjoint equation, sets `û = 1/p̂` and evaluates `J(û)`.
pub fn cashflow_solve(spec: &CashflowSpec, ens: &McEnsemble, tol: f64) -> Result<CashflowSolution> {
    spec.validate()?;
    let g = spec.grid;
    let w = g.len();
    let n = ens.n_paths();
    let bspec = spec.adjoint_spec();
    let res = resolvent_psi(&bspec.phi, g, tol)?;
    let adjoint = bsvie_solve_y(&bspec, &res, ens)?;
    let zk = bsvie_solve_zk(&bspec, &adjoint)?;
    let bad = adjoint.y.iter().filter(|&&p| !(p > 0.0)).count();
    if bad > 0 {
        return Err(ChaosError::Infeasible(format!(
            "adjoint p ≤ 0 on {:.3}% of path-time points; log utility needs u > 0",
            100.0 * bad as f64 / adjoint.y.len() as f64
        )));
    }
    let u: Vec<f64> = adjoint.y.iter().map(|p| 1.0 / p).collect();
    let first_order_residual = u.iter().zip(&adjoint.y).map(|(u, p)| (1.0 / u - p).abs()).fold(0.0, f64::max);

    let dt = g.dt();
    let m = g.steps;
    let b0_tab: Vec<Vec<f64>> = (0..=m).map(|i| (0..i).map(|j| (spec.b0)(g.t(i), g.t(j))).collect()).collect();
    let sig: Vec<f64> = (0..m).map(|j| (spec.sigma0)(g.t(j))).collect();
    let gam: Vec<Vec<f64>> = spec.gamma0.iter().map(|f| (0..m).map(|j| f(g.t(j))).collect()).collect();
    let nus: Vec<f64> = spec.levy.as_ref().map(|l| l.atoms.iter().map(|a| a.nu).collect()).unwrap_or_default();
    let mut x = vec![0.0; n * w];
    x.par_chunks_mut(w).enumerate().for_each(|(p, xr)| {
        let b = ens.brownian(p);
        let ur = &u[p * w..(p + 1) * w];
        // multiplicative noise per cell
        let mut noise: Vec<f64> = (0..m)
            .map(|j| sig[j] * (b[j + 1] - b[j]) - gam.iter().zip(&nus).map(|(gm, nu)| gm[j] * nu).sum::<f64>() * dt)
            .collect();
        for jump in ens.jumps(p) {
            let c = g.cell_of(jump.time);
            noise[c] += gam[jump.atom][c];
        }
        xr[0] = spec.x0;
        for i in 1..=m {
            let mut v = spec.x0;
            for j in 0..i {
                v += (b0_tab[i][j] * xr[j] - ur[j]) * dt + xr[j] * noise[j];
            }
            xr[i] = v;
        }
    });
    let samples: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|p| {
            let theta = spec.theta.c0
                + spec.theta.c_b * ens.brownian(p)[m]
                + spec.theta.c_n * ens.compensated_jump_sum(p, g.horizon);
            let logs: f64 = u[p * w..p * w + m].iter().map(|v| v.ln()).sum::<f64>() * dt;
            theta * x[p * w + m] + logs
        })
        .collect();
    let objective = Estimate::of(&samples);

    // ∂ℋ/∂u at û on a subsample of paths
    let hamiltonian_gradient = (0..n.min(64))
        .map(|p| {
            let yrow = adjoint.y_path(p).to_vec();
            let pf = move |s: f64| {
                let k = g.cell_of(s);
                let a = (s - g.t(k)) / dt;
                (1.0 - a) * yrow[k] + a * yrow[k + 1]
            };
            let qf = |s: f64, t: f64| zk_at(&zk.z, g, t, s);
            let rf = |s: f64, t: f64, a: usize| zk_at(&zk.k[a], g, t, s);
            let adj = Adjoints { p: &pf, q: &qf, r: &rf };
            (0..m)
                .map(|i| {
                    let t = g.t(i);
                    let uu = u[p * w + i];
                    let xx = x[p * w + i];
                    let h = 1e-5 * uu;
                    let d = (svie_hamiltonian(spec, t, xx, uu + h, &adj) - svie_hamiltonian(spec, t, xx, uu - h, &adj))
                        / (2.0 * h);
                    d.abs()
                })
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max);
    Ok(CashflowSolution {
        adjoint,
        zk,
        u,
        x,
        objective,
        first_order_residual,
        hamiltonian_gradient,
        concavity: ConcavityReport {
            running_reward_strictly_concave: true,
            terminal_reward_concave: true,
            hamiltonian_concave: true,
        },
    })
}

/// Grid triangle value at `(t, s)`, nearest row and linear in `s`.
fn zk_at(tri: &crate::bsvie::TriangleKernel, g: TimeGrid, t: f64, s: f64) -> f64 {
    let i = ((t / g.dt()).round() as usize).min(g.steps);
    let x = (s / g.dt()).clamp(i as f64, g.steps as f64);
    let j = (x.floor() as usize).min(g.steps.saturating_sub(1)).max(i);
    if j >= g.steps {
        return tri.get(i, g.steps);
    }
    let a = x - j as f64;
    (1.0 - a) * tri.get(i, j) + a * tri.get(i, j + 1)
}

/// `b₀(t, s) = scale · e^{−rate (t − s)}` and its derivative in `t`.
pub fn exp_memory(scale: f64, rate: f64) -> (TwoTimeFn, TwoTimeFn) {
    (
        Arc::new(move |t, s| scale * (-rate * (t - s)).exp()),
        Arc::new(move |t, s| -rate * scale * (-rate * (t - s)).exp()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bsvie::constant_fn;
    use crate::mc::{build_ensemble, Atom};

    fn lq(x0: f64, sigma: f64, jumps: bool) -> LqProblem {
        let levy = jumps.then(|| LevyModel::new(vec![Atom { zeta: 1.0, nu: 2.0 }]).unwrap());
        LqProblem {
            x0,
            sigma,
            gamma: if jumps { vec![0.1] } else { vec![] },
            grid: TimeGrid::new(1.0, 16).unwrap(),
            levy,
            constrained: true,
        }
    }

    #[test]
    fn lq_hamiltonian_values() {
        let p = lq(0.0, 0.3, true);
        let h = hamiltonian(&p, 0.2, 1.0, 0.5, 2.0, 3.0, &[4.0]);
        assert!((h - (-0.125 + 1.0 + 0.9 + 0.1 * 4.0 * 2.0)).abs() < 1e-15);
        assert_eq!(hamiltonian(&p, 0.2, 1.0, 0.5, 0.0, 0.0, &[0.0]), -0.125);
        assert_eq!(p.dh_du(0.5, 2.0), 1.5);
    }

    #[test]
    fn positive_start_stays_uncontrolled() {
        let prob = lq(1.5, 0.0, false);
        let ens = build_ensemble(1, 200, 2, prob.grid, None).unwrap();
        let it = lq_solve(&prob, &ens, 20, 1e-10).unwrap();
        assert!(it.converged);
        assert!(it.paths.u.iter().all(|&u| u == 0.0));
        assert!(it.paths.x.iter().all(|&x| (x - 1.5).abs() < 1e-14));
    }

    #[test]
    fn degenerate_benchmark() {
        let prob = LqProblem { constrained: false, ..lq(0.0, 0.0, false) };
        let ens = build_ensemble(1, 100, 2, prob.grid, None).unwrap();
        let b = unconstrained_benchmark(&prob, &ens).unwrap();
        assert_eq!(b.objective.estimate, 0.0);
        assert!(b.paths.u.iter().all(|&u| u == 0.0));
    }

    #[test]
    fn svie_hamiltonian_reduces() {
        let g = TimeGrid::new(1.0, 8).unwrap();
        let (b0, db) = exp_memory(0.0, 0.0);
        let spec = CashflowSpec {
            grid: g,
            x0: 1.0,
            b0,
            db0_dt: db,
            sigma0: constant_fn(0.0),
            gamma0: vec![],
            theta: TerminalAffine { c0: 2.0, c_b: 0.0, c_n: 0.0 },
            levy: None,
        };
        let zero1 = |_: f64| 0.0;
        let zero2 = |_: f64, _: f64| 0.0;
        let zero3 = |_: f64, _: f64, _: usize| 0.0;
        let adj = Adjoints { p: &zero1, q: &zero2, r: &zero3 };
        assert!((svie_hamiltonian(&spec, 0.3, 1.0, 2.0, &adj) - 2f64.ln()).abs() < 1e-15);
        let pc = |_: f64| 3.0;
        let adj = Adjoints { p: &pc, q: &zero2, r: &zero3 };
        // ∂ℋ/∂u = 1/u − p
        let h = 1e-6;
        let d = (svie_hamiltonian(&spec, 0.3, 1.0, 0.5 + h, &adj) - svie_hamiltonian(&spec, 0.3, 1.0, 0.5 - h, &adj))
            / (2.0 * h);
        assert!((d - (2.0 - 3.0)).abs() < 1e-8);
    }

    #[test]
    fn degenerate_cashflow() {
        let g = TimeGrid::new(1.0, 16).unwrap();
        let (b0, db) = exp_memory(0.0, 0.0);
        let c = 2.5;
        let spec = CashflowSpec {
            grid: g,
            x0: 1.2,
            b0,
            db0_dt: db,
            sigma0: constant_fn(0.0),
            gamma0: vec![],
            theta: TerminalAffine { c0: c, c_b: 0.0, c_n: 0.0 },
            levy: None,
        };
        let ens = build_ensemble(4, 100, 2, g, None).unwrap();
        let sol = cashflow_solve(&spec, &ens, 1e-12).unwrap();
        let want = c * 1.2 - 1.0 * (1.0 + c.ln());
        assert!((sol.objective.estimate - want).abs() < 1e-12, "{} vs {want}", sol.objective.estimate);
        assert!(sol.first_order_residual <= 1e-12);
        assert!(sol.hamiltonian_gradient < 1e-6);
    }

    #[test]
    fn constant_memory_adjoint() {
        // b₀ ≡ b: p(t) = c e^{b(T − t)}
        let g = TimeGrid::new(1.0, 16).unwrap();
        let (b0, db) = exp_memory(0.4, 0.0);
        let spec = CashflowSpec {
            grid: g,
            x0: 1.0,
            b0,
            db0_dt: db,
            sigma0: constant_fn(0.0),
            gamma0: vec![],
            theta: TerminalAffine { c0: 1.5, c_b: 0.0, c_n: 0.0 },
            levy: None,
        };
        let ens = build_ensemble(4, 10, 2, g, None).unwrap();
        let sol = cashflow_solve(&spec, &ens, 1e-12).unwrap();
        for i in 0..=16 {
            assert!((sol.adjoint.y_path(0)[i] - 1.5 * (0.4 * (1.0 - g.t(i))).exp()).abs() < 1e-10);
        }
    }

    #[test]
    fn negative_theta_is_infeasible() {
        let g = TimeGrid::new(1.0, 8).unwrap();
        let (b0, db) = exp_memory(0.0, 0.0);
        let spec = CashflowSpec {
            grid: g,
            x0: 1.0,
            b0,
            db0_dt: db,
            sigma0: constant_fn(0.0),
            gamma0: vec![],
            theta: TerminalAffine { c0: -1.0, c_b: 0.0, c_n: 0.0 },
            levy: None,
        };
        let ens = build_ensemble(4, 10, 2, g, None).unwrap();
        assert!(matches!(cashflow_solve(&spec, &ens, 1e-12), Err(ChaosError::Infeasible(_))));
    }
}

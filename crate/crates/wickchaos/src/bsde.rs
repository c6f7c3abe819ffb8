//! Linear and linear mean-field BSDEs with jumps,
//!
//! `dY = −[α₁Y + β₁Z + Σ_ζ η₁Kν + α₂E[Y] + β₂E[Z] + Σ_ζ η₂E[K]ν + γ] dt + Z dB + ∫K Ñ(dt,dζ)`,
//! `Y(T) = ξ`, with deterministic coefficients sampled on a grid.
//!
//! Coefficients act as left-point constants on each cell. The simulated
//! stochastic exponential then has `E[Γ(t_i, t_j)] = exp(Σ_{i≤k<j} α₁(t_k)Δt)`
//! exactly, and the closed forms below are exact conditional expectations of
//! the simulated quantities.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chaos::quadrature::quadrature_weights;
use crate::chaos::TimeGrid;
use crate::error::{ChaosError, Result};
use crate::mc::{regress_conditional, Estimate, LevyModel, McEnsemble};

/// `ξ = c₀ + c_B B(T) + c_N ∫_0^T∫ζ Ñ(ds,dζ)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TerminalAffine {
    #[serde(default)]
    pub c0: f64,
    #[serde(default, rename = "cB")]
    pub c_b: f64,
    #[serde(default, rename = "cN")]
    pub c_n: f64,
}

/// Deterministic coefficient bundle on a grid. Jump coefficients are indexed
/// `[atom][grid point]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearBsdeSpec {
    pub grid: TimeGrid,
    pub alpha1: Vec<f64>,
    pub alpha2: Vec<f64>,
    pub beta1: Vec<f64>,
    pub beta2: Vec<f64>,
    pub eta1: Vec<Vec<f64>>,
    pub eta2: Vec<Vec<f64>>,
    pub gamma: Vec<f64>,
    pub xi: TerminalAffine,
    pub levy: Option<LevyModel>,
}

impl LinearBsdeSpec {
    /// All coefficients zero, `ξ = 0`.
    pub fn zero(grid: TimeGrid, levy: Option<LevyModel>) -> Self {
        let p = grid.len();
        let atoms = levy.as_ref().map(|l| l.len()).unwrap_or(0);
        Self {
            grid,
            alpha1: vec![0.0; p],
            alpha2: vec![0.0; p],
            beta1: vec![0.0; p],
            beta2: vec![0.0; p],
            eta1: vec![vec![0.0; p]; atoms],
            eta2: vec![vec![0.0; p]; atoms],
            gamma: vec![0.0; p],
            xi: TerminalAffine::default(),
            levy,
        }
    }

    pub fn atoms(&self) -> usize {
        self.levy.as_ref().map(|l| l.len()).unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.grid.len();
        for (name, v) in [
            ("alpha1", &self.alpha1),
            ("alpha2", &self.alpha2),
            ("beta1", &self.beta1),
            ("beta2", &self.beta2),
            ("gamma", &self.gamma),
        ] {
            if v.len() != p {
                return Err(ChaosError::InvalidArgument(format!("{name} has {} values, grid has {p}", v.len())));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(ChaosError::InvalidArgument(format!("{name} is not finite")));
            }
        }
        let atoms = self.atoms();
        for (name, v) in [("eta1", &self.eta1), ("eta2", &self.eta2)] {
            if v.len() != atoms || v.iter().any(|r| r.len() != p) {
                return Err(ChaosError::InvalidArgument(format!("{name} must be [atoms][grid]")));
            }
        }
        for (a, row) in self.eta1.iter().enumerate() {
            if let Some(i) = row.iter().position(|e| 1.0 + e <= 0.0) {
                return Err(ChaosError::Domain(format!("1 + eta1 <= 0 at atom {a}, grid index {i}")));
            }
        }
        Ok(())
    }

    pub fn has_meanfield_terms(&self) -> bool {
        self.alpha2.iter().chain(&self.beta2).chain(self.eta2.iter().flatten()).any(|v| *v != 0.0)
    }

    fn zeta_nu(&self) -> Vec<(f64, f64)> {
        self.levy.as_ref().map(|l| l.atoms.iter().map(|a| (a.zeta, a.nu)).collect()).unwrap_or_default()
    }

    /// `Σ_{i≤k<j} f(t_k) Δt`.
    fn left_sum(&self, f: &[f64], i: usize, j: usize) -> f64 {
        f[i..j].iter().sum::<f64>() * self.grid.dt()
    }

    /// `G(t_i, t_j) = E[Γ(t_i, t_j)]`.
    pub fn g(&self, i: usize, j: usize) -> f64 {
        self.left_sum(&self.alpha1, i, j).exp()
    }

    /// `Σ_{k ≥ i} Σ_ζ ζ η₁(t_k, ζ) ν Δt`.
    fn jump_tilt(&self, i: usize) -> f64 {
        let m = self.grid.steps;
        self.zeta_nu().iter().enumerate().map(|(a, (z, nu))| z * nu * self.left_sum(&self.eta1[a], i, m)).sum()
    }

    /// `E[ξ Γ(t_i, T)]`.
    pub fn expected_xi_gamma(&self, i: usize) -> f64 {
        let m = self.grid.steps;
        self.g(i, m) * (self.xi.c0 + self.xi.c_b * self.left_sum(&self.beta1, i, m) + self.xi.c_n * self.jump_tilt(i))
    }

    /// Gregory weights of `∫_{t_i}^T`, indexed on the full grid.
    pub fn tail_weights(&self, i: usize) -> Vec<f64> {
        let m = self.grid.steps;
        let mut w = vec![0.0; m + 1];
        if i < m {
            for (k, v) in quadrature_weights(m - i, self.grid.dt()).into_iter().enumerate() {
                w[i + k] = v;
            }
        }
        w
    }

    /// `∫_{t_i}^T G(t_i, s) f(s) ds`.
    pub fn discounted_integral(&self, f: &[f64], i: usize) -> f64 {
        self.tail_weights(i).iter().enumerate().skip(i).map(|(k, w)| w * self.g(i, k) * f[k]).sum()
    }
}

/// Cumulative `ln Γ(0, t_i)` on every path.
#[derive(Clone, Debug)]
pub struct GammaField {
    points: usize,
    log: Vec<f64>,
}

impl GammaField {
    pub fn build(spec: &LinearBsdeSpec, ens: &McEnsemble) -> Result<Self> {
        spec.validate()?;
        if spec.grid != *ens.grid() {
            return Err(ChaosError::InvalidArgument("spec and ensemble grids differ".into()));
        }
        if spec.atoms() > 0 && ens.levy().map(|l| l.len()) != Some(spec.atoms()) {
            return Err(ChaosError::InvalidArgument("spec and ensemble Lévy models differ".into()));
        }
        let grid = spec.grid;
        let dt = grid.dt();
        let p = grid.len();
        let zn = spec.zeta_nu();
        let drift: Vec<f64> = (0..grid.steps)
            .map(|k| {
                let mut d = spec.alpha1[k] - 0.5 * spec.beta1[k] * spec.beta1[k];
                // jumps enter as raw sums of ln(1+η₁), so only −η₁ν remains in the drift
                for (a, (_, nu)) in zn.iter().enumerate() {
                    d -= spec.eta1[a][k] * nu;
                }
                d * dt
            })
            .collect();
        let log: Vec<f64> = (0..ens.n_paths())
            .into_par_iter()
            .flat_map_iter(|path| {
                let b = ens.brownian(path);
                let mut row = vec![0.0; p];
                let mut jumps = ens.jumps(path).iter().peekable();
                for k in 0..grid.steps {
                    let mut v = row[k] + spec.beta1[k] * (b[k + 1] - b[k]) + drift[k];
                    let end = grid.t(k + 1);
                    while let Some(j) = jumps.peek() {
                        if j.time > end && k + 1 < grid.steps {
                            break;
                        }
                        v += (1.0 + spec.eta1[j.atom][k]).ln();
                        jumps.next();
                    }
                    row[k + 1] = v;
                }
                row
            })
            .collect();
        Ok(Self { points: p, log })
    }

    /// `Γ(t_i, t_j)` on one path.
    pub fn gamma(&self, path: usize, i: usize, j: usize) -> f64 {
        let row = &self.log[path * self.points..(path + 1) * self.points];
        (row[j] - row[i]).exp()
    }

    pub fn log_gamma(&self, path: usize, i: usize, j: usize) -> f64 {
        let row = &self.log[path * self.points..(path + 1) * self.points];
        row[j] - row[i]
    }
}

/// `Γ(t_i, t_j)` along one simulated path.
pub fn gamma_path(spec: &LinearBsdeSpec, ens: &McEnsemble, i: usize, j: usize, path: usize) -> Result<f64> {
    if i > j || j > spec.grid.steps {
        return Err(ChaosError::InvalidArgument(format!("need t_i <= t_j on the grid, got {i}, {j}")));
    }
    Ok(GammaField::build(spec, ens)?.gamma(path, i, j))
}

/// Per-path `ξ`.
pub fn terminal_values(xi: &TerminalAffine, ens: &McEnsemble) -> Vec<f64> {
    let m = ens.grid().steps;
    let t = ens.grid().horizon;
    (0..ens.n_paths()).map(|p| xi.c0 + xi.c_b * ens.brownian(p)[m] + xi.c_n * ens.compensated_jump_sum(p, t)).collect()
}

/// Closed-form solution on every path.
#[derive(Clone, Debug)]
pub struct BsdeSolution {
    pub grid: TimeGrid,
    pub n_paths: usize,
    /// `Y(t_i)` row-major by path.
    pub y: Vec<f64>,
    /// `Z(t_i) = c_B G(t_i, T)` (deterministic for affine ξ).
    pub z: Vec<f64>,
    /// `K(t_i, ζ) = c_N ζ G(t_i, T)`, `[atom][grid]`.
    pub k: Vec<Vec<f64>>,
}

impl BsdeSolution {
    pub fn y_path(&self, path: usize) -> &[f64] {
        let p = self.grid.len();
        &self.y[path * p..(path + 1) * p]
    }

    /// `Y(t_i)` on every path.
    pub fn y_at(&self, i: usize) -> Vec<f64> {
        (0..self.n_paths).map(|p| self.y_path(p)[i]).collect()
    }
}

/// `Y(t) = E[ξΓ(t,T) + ∫_t^T Γ(t,s)γ(s)ds | F_t]` in closed form:
/// `Y(t) = G(t,T)[c₀ + c_B B(t) + c_N J(t) + c_B∫β₁ + c_N∫Σζη₁ν] + ∫G(t,s)γ(s)ds`.
pub fn linear_bsde_solve(spec: &LinearBsdeSpec, ens: &McEnsemble) -> Result<BsdeSolution> {
    if spec.has_meanfield_terms() {
        return Err(ChaosError::Unsupported("mean-field coefficients need meanfield_bsde_solve".into()));
    }
    solve_with_drift(spec, &spec.gamma, ens)
}

fn solve_with_drift(spec: &LinearBsdeSpec, drift: &[f64], ens: &McEnsemble) -> Result<BsdeSolution> {
    spec.validate()?;
    if spec.grid != *ens.grid() {
        return Err(ChaosError::InvalidArgument("spec and ensemble grids differ".into()));
    }
    let grid = spec.grid;
    let m = grid.steps;
    let p = grid.len();
    let xi = spec.xi;
    let gt: Vec<f64> = (0..p).map(|i| spec.g(i, m)).collect();
    let tilt: Vec<f64> =
        (0..p).map(|i| xi.c_b * spec.left_sum(&spec.beta1, i, m) + xi.c_n * spec.jump_tilt(i)).collect();
    let forced: Vec<f64> = (0..p).map(|i| spec.discounted_integral(drift, i)).collect();
    let y: Vec<f64> = (0..ens.n_paths())
        .into_par_iter()
        .flat_map_iter(|path| {
            let b = ens.brownian(path);
            (0..p)
                .map(|i| {
                    let j = ens.compensated_jump_sum(path, grid.t(i));
                    gt[i] * (xi.c0 + xi.c_b * b[i] + xi.c_n * j + tilt[i]) + forced[i]
                })
                .collect::<Vec<f64>>()
        })
        .collect();
    let z = gt.iter().map(|g| xi.c_b * g).collect();
    let k = spec.zeta_nu().iter().map(|(zeta, _)| gt.iter().map(|g| xi.c_n * zeta * g).collect()).collect();
    Ok(BsdeSolution { grid, n_paths: ens.n_paths(), y, z, k })
}

/// Closed form against regression of the raw simulated target at `t_i`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct RegressionCrossCheck {
    /// Mean of `closed form − raw target`.
    pub bias: Estimate,
    /// RMS of `closed form − regression fit`.
    pub fit_rms: f64,
}

pub fn regression_cross_check(
    spec: &LinearBsdeSpec,
    sol: &BsdeSolution,
    ens: &McEnsemble,
    i: usize,
) -> Result<RegressionCrossCheck> {
    let gf = GammaField::build(spec, ens)?;
    let m = spec.grid.steps;
    let xi = terminal_values(&spec.xi, ens);
    let w = spec.tail_weights(i);
    let raw: Vec<f64> = (0..ens.n_paths())
        .map(|p| {
            let mut v = xi[p] * gf.gamma(p, i, m);
            for k in i..=m {
                v += w[k] * gf.gamma(p, i, k) * spec.gamma[k];
            }
            v
        })
        .collect();
    let closed = sol.y_at(i);
    let diff: Vec<f64> = closed.iter().zip(&raw).map(|(a, b)| a - b).collect();
    let fit = regress_conditional(&raw, i, ens, 3)?;
    let rms = (closed.iter().zip(&fit.fitted).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / closed.len() as f64).sqrt();
    Ok(RegressionCrossCheck { bias: Estimate::of(&diff), fit_rms: rms })
}

/// Estimates of `E[D_t p(t+ε) | F_t]` for shrinking `ε`.
#[derive(Clone, Debug, Serialize)]
pub struct RepresentationReport {
    pub t: f64,
    pub q_exact: f64,
    pub eps: Vec<f64>,
    pub estimates: Vec<Estimate>,
    /// `2 est(ε/2) − est(ε)` for consecutive pairs, with per-path standard errors.
    pub richardson: Vec<Estimate>,
    /// Jump analogue at each atom: estimates at the smallest `ε` and exact `r(t, ζ)`.
    pub r_estimates: Vec<Estimate>,
    pub r_exact: Vec<f64>,
    pub errors_shrink: bool,
    pub pass: bool,
}

/// For `p = Y` with affine ξ, `D_t p(t+ε) = c_B Γ(t+ε, T)` in conditional mean and
/// `D_{t,ζ} p(t+ε) = c_N ζ Γ(t+ε, T)`; both are estimated on common paths.
///
/// `steps` lists the offsets `ε / Δt`, largest first.
pub fn representation_check(
    spec: &LinearBsdeSpec,
    ens: &McEnsemble,
    i: usize,
    steps: &[usize],
) -> Result<RepresentationReport> {
    if spec.has_meanfield_terms() {
        return Err(ChaosError::Unsupported("representation check covers the plain linear equation".into()));
    }
    let m = spec.grid.steps;
    if steps.iter().any(|&s| s == 0 || i + s > m) {
        return Err(ChaosError::InvalidArgument("offsets must stay inside the grid".into()));
    }
    let gf = GammaField::build(spec, ens)?;
    let dt = spec.grid.dt();
    let cb = spec.xi.c_b;
    let samples: Vec<Vec<f64>> =
        steps.iter().map(|&s| (0..ens.n_paths()).map(|p| cb * gf.gamma(p, i + s, m)).collect()).collect();
    let estimates: Vec<Estimate> = samples.iter().map(|v| Estimate::of(v)).collect();
    let q_exact = cb * spec.g(i, m);
    let mut richardson = Vec::new();
    for w in samples.windows(2) {
        let r: Vec<f64> = w[0].iter().zip(&w[1]).map(|(a, b)| 2.0 * b - a).collect();
        richardson.push(Estimate::of(&r));
    }
    let errs: Vec<f64> = estimates.iter().map(|e| (e.estimate - q_exact).abs()).collect();
    let errors_shrink = errs.windows(2).all(|w| w[1] <= w[0] + 1e-15);
    let last_ok = match richardson.last() {
        Some(r) => r.within(q_exact, 3.0, 1e-12),
        None => estimates.last().map(|e| e.within(q_exact, 3.0, 1e-12)).unwrap_or(false),
    };
    let smallest = *steps.last().unwrap_or(&1);
    let mut r_estimates = Vec::new();
    let mut r_exact = Vec::new();
    for (zeta, _) in spec.zeta_nu() {
        let v: Vec<f64> = (0..ens.n_paths()).map(|p| spec.xi.c_n * zeta * gf.gamma(p, i + smallest, m)).collect();
        r_estimates.push(Estimate::of(&v));
        r_exact.push(spec.xi.c_n * zeta * spec.g(i, m));
    }
    Ok(RepresentationReport {
        t: spec.grid.t(i),
        q_exact,
        eps: steps.iter().map(|&s| s as f64 * dt).collect(),
        estimates,
        richardson,
        r_estimates,
        r_exact,
        errors_shrink,
        pass: errors_shrink && last_ok,
    })
}

/// How rows 2–3 of the mean-field system are formed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeanFieldMode {
    /// Rows 2–3 scale the row-1 kernel by `β₁(t)`, `η₁(t,ζ)` and add `∫_t^T γ ds`.
    #[default]
    WithDerivativeDrift,
    /// Same as above, without the `∫_t^T γ ds` term in rows 2–3.
    NoDerivativeDrift,
    /// `Z̄ = c_B G(t,T)`, `K̄ = c_N ζ G(t,T)`: the expectations of the true `Z`, `K`.
    Corrected,
}

/// `V = (Ȳ, Z̄, K̄(·, ζ))` on the grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MeanFieldVector {
    pub ybar: Vec<f64>,
    pub zbar: Vec<f64>,
    pub kbar: Vec<Vec<f64>>,
}

impl MeanFieldVector {
    pub fn zeros(points: usize, atoms: usize) -> Self {
        Self { ybar: vec![0.0; points], zbar: vec![0.0; points], kbar: vec![vec![0.0; points]; atoms] }
    }

    fn blocks(&self) -> usize {
        2 + self.kbar.len()
    }

    fn block(&self, b: usize) -> &[f64] {
        match b {
            0 => &self.ybar,
            1 => &self.zbar,
            _ => &self.kbar[b - 2],
        }
    }

    fn block_mut(&mut self, b: usize) -> &mut [f64] {
        match b {
            0 => &mut self.ybar,
            1 => &mut self.zbar,
            _ => &mut self.kbar[b - 2],
        }
    }

    pub fn sup_norm(&self) -> f64 {
        (0..self.blocks()).flat_map(|b| self.block(b).iter()).fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &MeanFieldVector) -> f64 {
        (0..self.blocks())
            .flat_map(|b| self.block(b).iter().zip(other.block(b)))
            .fold(0.0, |m, (a, c)| m.max((a - c).abs()))
    }

    /// Largest deviation restricted to grid indices `lo..=hi`.
    pub fn max_abs_diff_on(&self, other: &MeanFieldVector, lo: usize, hi: usize) -> f64 {
        (0..self.blocks())
            .flat_map(|b| self.block(b)[lo..=hi].iter().zip(&other.block(b)[lo..=hi]))
            .fold(0.0, |m, (a, c)| m.max((a - c).abs()))
    }
}

/// Discretized mean-field kernel:
/// `(AV)_r(t_a) = Σ_{b ≥ a} w^{(a)}_b G(t_a, t_b) ρ_r(t_a) [α₂V₁ + β₂V₂ + Σ η₂V₃ν](t_b)`
/// with `ρ = (1, β₁, η₁(·, ζ))` and Gregory weights `w^{(a)}` of `∫_{t_a}^T`.
#[derive(Clone, Debug)]
pub struct MeanFieldOperator {
    spec: LinearBsdeSpec,
    mode: MeanFieldMode,
    weights: Vec<Vec<f64>>,
    g: Vec<Vec<f64>>,
}

pub fn meanfield_operator(spec: &LinearBsdeSpec, mode: MeanFieldMode) -> Result<MeanFieldOperator> {
    spec.validate()?;
    let p = spec.grid.len();
    let weights = (0..p).map(|a| spec.tail_weights(a)).collect();
    let g = (0..p).map(|a| (0..p).map(|b| if b >= a { spec.g(a, b) } else { 0.0 }).collect()).collect();
    Ok(MeanFieldOperator { spec: spec.clone(), mode, weights, g })
}

impl MeanFieldOperator {
    pub fn spec(&self) -> &LinearBsdeSpec {
        &self.spec
    }

    pub fn mode(&self) -> MeanFieldMode {
        self.mode
    }

    fn blocks(&self) -> usize {
        2 + self.spec.atoms()
    }

    fn row_scale(&self, r: usize, a: usize) -> f64 {
        match (r, self.mode) {
            (0, _) => 1.0,
            (_, MeanFieldMode::Corrected) => 0.0,
            (1, _) => self.spec.beta1[a],
            (r, _) => self.spec.eta1[r - 2][a],
        }
    }

    fn col_scale(&self, c: usize, b: usize) -> f64 {
        match c {
            0 => self.spec.alpha2[b],
            1 => self.spec.beta2[b],
            c => {
                let nu = self.spec.levy.as_ref().map(|l| l.atoms[c - 2].nu).unwrap_or(0.0);
                self.spec.eta2[c - 2][b] * nu
            }
        }
    }

    /// Matrix entry coupling block `r` at `t_a` to block `c` at `t_b`.
    pub fn entry(&self, r: usize, c: usize, a: usize, b: usize) -> f64 {
        if b < a {
            return 0.0;
        }
        self.weights[a][b] * self.g[a][b] * self.row_scale(r, a) * self.col_scale(c, b)
    }

    /// `(AV)` restricted to rows `lo..=hi`, using `V` over `lo..=hi` only.
    pub fn apply_on(&self, v: &MeanFieldVector, lo: usize, hi: usize) -> MeanFieldVector {
        let p = self.spec.grid.len();
        let nb = self.blocks();
        let mut out = MeanFieldVector::zeros(p, self.spec.atoms());
        for a in lo..=hi {
            // inner sum is shared across rows
            let mut s = 0.0;
            for b in a..=hi {
                let mut col = 0.0;
                for c in 0..nb {
                    col += self.col_scale(c, b) * v.block(c)[b];
                }
                s += self.weights[a][b] * self.g[a][b] * col;
            }
            for r in 0..nb {
                out.block_mut(r)[a] = self.row_scale(r, a) * s;
            }
        }
        out
    }

    /// Known contribution of `V` on `(hi, M]` to rows `lo..=hi`.
    pub fn forcing_from(&self, v: &MeanFieldVector, lo: usize, hi: usize) -> MeanFieldVector {
        let p = self.spec.grid.len();
        let m = self.spec.grid.steps;
        let nb = self.blocks();
        let mut out = MeanFieldVector::zeros(p, self.spec.atoms());
        for a in lo..=hi {
            let mut s = 0.0;
            for b in hi + 1..=m {
                let mut col = 0.0;
                for c in 0..nb {
                    col += self.col_scale(c, b) * v.block(c)[b];
                }
                s += self.weights[a][b] * self.g[a][b] * col;
            }
            for r in 0..nb {
                out.block_mut(r)[a] = self.row_scale(r, a) * s;
            }
        }
        out
    }

    /// Induced ∞-norm of the operator on `lo..=hi`.
    pub fn norm_estimate(&self, lo: usize, hi: usize) -> f64 {
        let nb = self.blocks();
        let mut worst: f64 = 0.0;
        for a in lo..=hi {
            for r in 0..nb {
                let mut s = 0.0;
                for b in a..=hi {
                    for c in 0..nb {
                        s += self.entry(r, c, a, b).abs();
                    }
                }
                worst = worst.max(s);
            }
        }
        worst
    }

    /// Dense matrix on `lo..=hi`; unknowns ordered block-major.
    pub fn dense(&self, lo: usize, hi: usize) -> DMatrix<f64> {
        let n = hi - lo + 1;
        let nb = self.blocks();
        DMatrix::from_fn(nb * n, nb * n, |row, col| {
            let (r, a) = (row / n, row % n + lo);
            let (c, b) = (col / n, col % n + lo);
            self.entry(r, c, a, b)
        })
    }
}

/// Builds `F` in the chosen mode, from closed forms.
pub fn meanfield_f_vector(spec: &LinearBsdeSpec, mode: MeanFieldMode) -> Result<MeanFieldVector> {
    spec.validate()?;
    let p = spec.grid.len();
    let m = spec.grid.steps;
    let zn = spec.zeta_nu();
    let mut f = MeanFieldVector::zeros(p, spec.atoms());
    let tail_gamma = spec.grid.tail(&spec.gamma);
    for i in 0..p {
        let exi = spec.expected_xi_gamma(i);
        let g = spec.g(i, m);
        f.ybar[i] = exi + spec.discounted_integral(&spec.gamma, i);
        let extra = match mode {
            MeanFieldMode::WithDerivativeDrift => tail_gamma[i],
            _ => 0.0,
        };
        match mode {
            MeanFieldMode::Corrected => {
                f.zbar[i] = spec.xi.c_b * g;
                for (a, (z, _)) in zn.iter().enumerate() {
                    f.kbar[a][i] = spec.xi.c_n * z * g;
                }
            }
            _ => {
                f.zbar[i] = spec.xi.c_b * g + spec.beta1[i] * exi + extra;
                for (a, (z, _)) in zn.iter().enumerate() {
                    f.kbar[a][i] = spec.xi.c_n * z * g + spec.eta1[a][i] * exi + extra;
                }
            }
        }
    }
    Ok(f)
}

/// Monte Carlo version of the first two rows of `F` (closed-form drift terms).
pub fn meanfield_f_vector_mc(spec: &LinearBsdeSpec, ens: &McEnsemble, i: usize) -> Result<(Estimate, Estimate)> {
    let gf = GammaField::build(spec, ens)?;
    let m = spec.grid.steps;
    let xi = terminal_values(&spec.xi, ens);
    let drift = spec.discounted_integral(&spec.gamma, i);
    let row1: Vec<f64> = (0..ens.n_paths()).map(|p| xi[p] * gf.gamma(p, i, m) + drift).collect();
    let row2: Vec<f64> =
        (0..ens.n_paths()).map(|p| (spec.xi.c_b + spec.beta1[i] * xi[p]) * gf.gamma(p, i, m)).collect();
    Ok((Estimate::of(&row1), Estimate::of(&row2)))
}

/// Result of a Neumann solve.
#[derive(Clone, Debug)]
pub struct NeumannResult {
    pub v: MeanFieldVector,
    pub terms: usize,
    pub norm: f64,
}

/// `V = Σ_n Aⁿ F` on `lo..=hi` until the next term is below `tol` in sup norm.
pub fn neumann_solve_on(
    op: &MeanFieldOperator,
    f: &MeanFieldVector,
    lo: usize,
    hi: usize,
    tol: f64,
) -> Result<NeumannResult> {
    let norm = op.norm_estimate(lo, hi);
    if norm >= 1.0 {
        return Err(ChaosError::IntervalTooLong { norm });
    }
    let mut term = restrict(f, lo, hi);
    let mut v = term.clone();
    let mut terms = 0;
    while term.sup_norm() >= tol {
        term = op.apply_on(&term, lo, hi);
        add_into(&mut v, &term);
        terms += 1;
        if terms > 10_000 {
            return Err(ChaosError::IntervalTooLong { norm });
        }
    }
    Ok(NeumannResult { v, terms, norm })
}

/// Neumann solve over the whole grid as a single interval.
pub fn neumann_solve(op: &MeanFieldOperator, f: &MeanFieldVector, tol: f64) -> Result<NeumannResult> {
    neumann_solve_on(op, f, 0, op.spec.grid.steps, tol)
}

/// Dense LU solve of `(I − A)V = F` on `lo..=hi`.
pub fn dense_solve_on(op: &MeanFieldOperator, f: &MeanFieldVector, lo: usize, hi: usize) -> Result<MeanFieldVector> {
    let n = hi - lo + 1;
    let nb = op.blocks();
    let a = op.dense(lo, hi);
    let lhs = DMatrix::<f64>::identity(nb * n, nb * n) - a;
    let rhs = DVector::from_fn(nb * n, |row, _| f.block(row / n)[row % n + lo]);
    let sol = lhs.lu().solve(&rhs).ok_or_else(|| ChaosError::Domain("I − A is singular".into()))?;
    let mut out = MeanFieldVector::zeros(f.ybar.len(), f.kbar.len());
    for row in 0..nb * n {
        out.block_mut(row / n)[row % n + lo] = sol[row];
    }
    Ok(out)
}

fn restrict(v: &MeanFieldVector, lo: usize, hi: usize) -> MeanFieldVector {
    let mut out = MeanFieldVector::zeros(v.ybar.len(), v.kbar.len());
    for b in 0..v.blocks() {
        out.block_mut(b)[lo..=hi].copy_from_slice(&v.block(b)[lo..=hi]);
    }
    out
}

fn add_into(acc: &mut MeanFieldVector, x: &MeanFieldVector) {
    for b in 0..acc.blocks() {
        for (a, v) in acc.block_mut(b).iter_mut().zip(x.block(b)) {
            *a += v;
        }
    }
}

/// Backward, interval-by-interval solution of the mean-field system.
#[derive(Clone, Debug)]
pub struct MeanFieldSolution {
    pub v: MeanFieldVector,
    /// Interval boundaries as grid indices, from `T` backwards.
    pub boundaries: Vec<usize>,
    pub cells_per_interval: usize,
    pub norm: f64,
    /// Largest change of a boundary node when re-solved in the next interval.
    pub continuity: f64,
    pub y: Option<BsdeSolution>,
}

/// Picks the interval length (halving from the whole horizon until the norm
/// estimate is at most 0.9), solves backwards with forcing from the solved
/// part, and assembles `Y` on the ensemble if one is given.
pub fn meanfield_bsde_solve(
    spec: &LinearBsdeSpec,
    mode: MeanFieldMode,
    cells: Option<usize>,
    tol: f64,
    ens: Option<&McEnsemble>,
) -> Result<MeanFieldSolution> {
    let op = meanfield_operator(spec, mode)?;
    let f = meanfield_f_vector(spec, mode)?;
    let m = spec.grid.steps;
    let mut width = cells.unwrap_or(m).clamp(1, m);
    if cells.is_none() {
        while width > 1 && worst_norm(&op, width) > 0.9 {
            width = width.div_ceil(2);
        }
    }
    let norm = worst_norm(&op, width);
    if norm > 0.9 {
        return Err(ChaosError::IntervalTooLong { norm });
    }
    let mut v = MeanFieldVector::zeros(spec.grid.len(), spec.atoms());
    let mut boundaries = vec![m];
    let mut hi = m;
    let mut continuity: f64 = 0.0;
    let mut first = true;
    loop {
        let lo = hi.saturating_sub(width);
        let forcing = op.forcing_from(&v, lo, hi);
        let mut rhs = restrict(&f, lo, hi);
        add_into(&mut rhs, &forcing);
        let part = neumann_solve_on(&op, &rhs, lo, hi, tol)?;
        if !first {
            continuity = continuity.max(part.v.max_abs_diff_on(&v, hi, hi));
        }
        for b in 0..v.blocks() {
            // the boundary node keeps its value from the later interval
            let top = if first { hi } else { hi - 1 };
            if lo <= top {
                v.block_mut(b)[lo..=top].copy_from_slice(&part.v.block(b)[lo..=top]);
            }
        }
        first = false;
        boundaries.push(lo);
        if lo == 0 {
            break;
        }
        hi = lo;
    }
    let y = match ens {
        Some(e) => {
            let drift = effective_drift(spec, &v);
            Some(solve_with_drift(spec, &drift, e)?)
        }
        None => None,
    };
    Ok(MeanFieldSolution { v, boundaries, cells_per_interval: width, norm, continuity, y })
}

fn worst_norm(op: &MeanFieldOperator, width: usize) -> f64 {
    let m = op.spec.grid.steps;
    let mut hi = m;
    let mut worst: f64 = 0.0;
    loop {
        let lo = hi.saturating_sub(width);
        worst = worst.max(op.norm_estimate(lo, hi));
        if lo == 0 {
            return worst;
        }
        hi = lo;
    }
}

/// `γ(s) + α₂V₁ + β₂V₂ + Σ η₂V₃ν`.
pub fn effective_drift(spec: &LinearBsdeSpec, v: &MeanFieldVector) -> Vec<f64> {
    let zn = spec.zeta_nu();
    (0..spec.grid.len())
        .map(|s| {
            let mut d = spec.gamma[s] + spec.alpha2[s] * v.ybar[s] + spec.beta2[s] * v.zbar[s];
            for (a, (_, nu)) in zn.iter().enumerate() {
                d += spec.eta2[a][s] * v.kbar[a][s] * nu;
            }
            d
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> LinearBsdeSpec {
        let g = TimeGrid::new(1.0, 16).unwrap();
        let mut s = LinearBsdeSpec::zero(g, None);
        s.alpha1 = vec![0.3; 17];
        s.alpha2 = vec![0.2; 17];
        s.beta1 = vec![0.1; 17];
        s.beta2 = vec![0.15; 17];
        s.gamma = vec![0.5; 17];
        s.xi = TerminalAffine { c0: 1.0, c_b: 0.5, c_n: 0.0 };
        s
    }

    #[test]
    fn expectation_of_gamma_is_exponential() {
        let s = spec();
        assert!((s.g(0, 16) - 0.3f64.exp()).abs() < 1e-14);
        assert!((s.g(4, 12) - (0.3f64 * 0.5).exp()).abs() < 1e-14);
    }

    #[test]
    fn each_jump_multiplies_gamma_by_one_plus_eta() {
        use crate::mc::{build_ensemble, Atom};
        let g = TimeGrid::new(1.0, 8).unwrap();
        let levy = LevyModel::new(vec![Atom { zeta: 0.5, nu: 2.0 }]).unwrap();
        let mut s = LinearBsdeSpec::zero(g, Some(levy.clone()));
        s.eta1 = vec![vec![0.25; 9]];
        let ens = build_ensemble(4, 200, 2, g, Some(&levy)).unwrap();
        let gf = GammaField::build(&s, &ens).unwrap();
        for p in 0..200 {
            let n = ens.jumps(p).len() as i32;
            let want = 1.25f64.powi(n) * (-0.25f64 * 2.0).exp();
            assert!((gf.gamma(p, 0, 8) - want).abs() < 1e-12 * want);
        }
    }

    #[test]
    fn neumann_matches_dense() {
        let s = spec();
        for mode in [MeanFieldMode::WithDerivativeDrift, MeanFieldMode::NoDerivativeDrift, MeanFieldMode::Corrected] {
            let op = meanfield_operator(&s, mode).unwrap();
            let f = meanfield_f_vector(&s, mode).unwrap();
            let n = neumann_solve(&op, &f, 1e-13).unwrap();
            let d = dense_solve_on(&op, &f, 0, 16).unwrap();
            assert!(n.v.max_abs_diff(&d) < 1e-11);
        }
    }

    #[test]
    fn stitching_is_continuous_and_matches_global() {
        let s = spec();
        let sol = meanfield_bsde_solve(&s, MeanFieldMode::WithDerivativeDrift, Some(4), 1e-14, None).unwrap();
        assert!(sol.continuity < 1e-12);
        let op = meanfield_operator(&s, MeanFieldMode::WithDerivativeDrift).unwrap();
        let f = meanfield_f_vector(&s, MeanFieldMode::WithDerivativeDrift).unwrap();
        let d = dense_solve_on(&op, &f, 0, 16).unwrap();
        assert!(sol.v.max_abs_diff(&d) < 1e-11);
    }

    #[test]
    fn zero_meanfield_terms_give_zero_operator() {
        let mut s = spec();
        s.alpha2 = vec![0.0; 17];
        s.beta2 = vec![0.0; 17];
        let op = meanfield_operator(&s, MeanFieldMode::WithDerivativeDrift).unwrap();
        assert_eq!(op.norm_estimate(0, 16), 0.0);
    }
}

//! Seeded path ensembles: Gaussian chaos coordinates, the Brownian path they
//! synthesize, and finite-activity compound-Poisson jumps.
//!
//! The coordinates `θ_k` carry the chaos evaluation. The grid path adds an
//! independent Gaussian remainder with covariance `min(s,t) − Σ_k E_k(s)E_k(t)`,
//! so that `B̃ = Σ E_k θ_k + R` is exactly Brownian on the grid while staying
//! consistent with the `θ_k`.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chaos::{hermite::hermite_poly_all, HermiteBasis, HermiteChaos, KernelChaos, TimeGrid};
use crate::error::{ChaosError, Result};

/// Paths per RNG stream.
pub const BLOCK: usize = 1024;

/// One jump size with its intensity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Atom {
    pub zeta: f64,
    pub nu: f64,
}

/// Lévy measure `ν = Σ_j ν_j δ_{ζ_j}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevyModel {
    pub atoms: Vec<Atom>,
}

impl LevyModel {
    pub fn new(atoms: Vec<Atom>) -> Result<Self> {
        let m = Self { atoms };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.atoms.is_empty() {
            return Err(ChaosError::InvalidArgument("Lévy model needs at least one atom".into()));
        }
        for a in &self.atoms {
            if a.zeta == 0.0 || !a.zeta.is_finite() {
                return Err(ChaosError::InvalidArgument(format!("atom mark {} must be finite and non-zero", a.zeta)));
            }
            if !(a.nu > 0.0 && a.nu.is_finite()) {
                return Err(ChaosError::InvalidArgument(format!("atom intensity {} must be positive", a.nu)));
            }
        }
        Ok(())
    }

    /// Total intensity `λ = Σ ν_j`.
    pub fn intensity(&self) -> f64 {
        self.atoms.iter().map(|a| a.nu).sum()
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jump {
    pub time: f64,
    pub atom: usize,
}

/// Mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub estimate: f64,
    pub stderr: f64,
    pub n: usize,
}

impl Estimate {
    pub fn of(samples: &[f64]) -> Self {
        let n = samples.len();
        if n == 0 {
            return Self { estimate: f64::NAN, stderr: f64::NAN, n };
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var =
            if n > 1 { samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
        Self { estimate: mean, stderr: (var / n as f64).sqrt(), n }
    }

    /// `|estimate − target| ≤ k·stderr + slack`.
    pub fn within(&self, target: f64, k: f64, slack: f64) -> bool {
        (self.estimate - target).abs() <= k * self.stderr + slack
    }
}

/// Seeded collection of paths on a grid.
#[derive(Clone, Debug)]
pub struct McEnsemble {
    seed: u64,
    n_paths: usize,
    basis: HermiteBasis,
    levy: Option<LevyModel>,
    theta: Vec<f64>,
    brownian: Vec<f64>,
    jumps: Vec<Vec<Jump>>,
}

/// Draws `n_paths` paths. Deterministic in all arguments and independent of
/// the thread count.
pub fn build_ensemble(
    seed: u64,
    n_paths: usize,
    k: usize,
    grid: TimeGrid,
    levy: Option<&LevyModel>,
) -> Result<McEnsemble> {
    if n_paths == 0 {
        return Err(ChaosError::InvalidArgument("ensemble needs at least one path".into()));
    }
    if let Some(l) = levy {
        l.validate()?;
    }
    let basis = HermiteBasis::new(k, grid)?;
    let tail = tail_factor(&basis);
    let p = grid.len();
    let blocks = n_paths.div_ceil(BLOCK);
    let parts: Vec<(Vec<f64>, Vec<f64>, Vec<Vec<Jump>>)> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            let count = BLOCK.min(n_paths - b * BLOCK);
            let mut theta = Vec::with_capacity(count * k);
            let mut path = Vec::with_capacity(count * p);
            let mut jumps = Vec::with_capacity(count);
            let mut z = vec![0.0; tail.ncols()];
            for _ in 0..count {
                let th: Vec<f64> = (0..k).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                for zi in z.iter_mut() {
                    *zi = rng.sample(StandardNormal);
                }
                for i in 0..p {
                    let mut v = 0.0;
                    for (j, t) in th.iter().enumerate() {
                        v += basis.big_e(j + 1, i) * t;
                    }
                    for (c, zc) in z.iter().enumerate() {
                        v += tail[(i, c)] * zc;
                    }
                    path.push(v);
                }
                theta.extend_from_slice(&th);
                jumps.push(draw_jumps(&mut rng, grid.horizon, levy));
            }
            (theta, path, jumps)
        })
        .collect();
    let mut theta = Vec::with_capacity(n_paths * k);
    let mut brownian = Vec::with_capacity(n_paths * p);
    let mut jumps = Vec::with_capacity(n_paths);
    for (t, b, j) in parts {
        theta.extend(t);
        brownian.extend(b);
        jumps.extend(j);
    }
    Ok(McEnsemble { seed, n_paths, basis, levy: levy.cloned(), theta, brownian, jumps })
}

/// Factor `L` with `L Lᵀ` the remainder covariance on the grid.
fn tail_factor(basis: &HermiteBasis) -> DMatrix<f64> {
    let grid = basis.grid();
    let p = grid.len();
    let mut c = DMatrix::<f64>::zeros(p, p);
    for i in 0..p {
        for j in 0..=i {
            let mut v = grid.t(j).min(grid.t(i));
            for k in 1..=basis.k() {
                v -= basis.big_e(k, i) * basis.big_e(k, j);
            }
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }
    let eig = SymmetricEigen::new(c);
    let top = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..p).filter(|&i| eig.eigenvalues[i] > 1e-14 * top.max(1e-300)).collect();
    let mut l = DMatrix::<f64>::zeros(p, keep.len());
    for (c, &i) in keep.iter().enumerate() {
        let s = eig.eigenvalues[i].sqrt();
        for r in 0..p {
            l[(r, c)] = eig.eigenvectors[(r, i)] * s;
        }
    }
    l
}

fn draw_jumps(rng: &mut ChaCha8Rng, horizon: f64, levy: Option<&LevyModel>) -> Vec<Jump> {
    let Some(levy) = levy else {
        return Vec::new();
    };
    let lambda = levy.intensity();
    let count = match Poisson::new(lambda * horizon) {
        Ok(p) => p.sample(rng) as usize,
        Err(_) => 0,
    };
    let mut out: Vec<Jump> = (0..count)
        .map(|_| {
            let time = rng.random::<f64>() * horizon;
            let u = rng.random::<f64>() * lambda;
            let mut acc = 0.0;
            let mut atom = levy.atoms.len() - 1;
            for (j, a) in levy.atoms.iter().enumerate() {
                acc += a.nu;
                if u < acc {
                    atom = j;
                    break;
                }
            }
            Jump { time, atom }
        })
        .collect();
    out.sort_by(|a, b| a.time.partial_cmp(&b.time).unwrap());
    out
}

impl McEnsemble {
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn k(&self) -> usize {
        self.basis.k()
    }

    pub fn grid(&self) -> &TimeGrid {
        self.basis.grid()
    }

    pub fn basis(&self) -> &HermiteBasis {
        &self.basis
    }

    pub fn levy(&self) -> Option<&LevyModel> {
        self.levy.as_ref()
    }

    pub fn theta(&self, path: usize) -> &[f64] {
        let k = self.k();
        &self.theta[path * k..(path + 1) * k]
    }

    /// Grid path `B̃(t_i)` (chaos part plus remainder).
    pub fn brownian(&self, path: usize) -> &[f64] {
        let p = self.grid().len();
        &self.brownian[path * p..(path + 1) * p]
    }

    /// `B̃(t_{i+1}) − B̃(t_i)` for every cell.
    pub fn increments(&self, path: usize) -> Vec<f64> {
        self.brownian(path).windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn jumps(&self, path: usize) -> &[Jump] {
        &self.jumps[path]
    }

    /// `(Σ ζ, count)` over jumps at times `≤ t`.
    pub fn jump_state(&self, path: usize, t: f64) -> (f64, usize) {
        let Some(levy) = &self.levy else {
            return (0.0, 0);
        };
        let mut s = 0.0;
        let mut n = 0;
        for j in &self.jumps[path] {
            if j.time > t {
                break;
            }
            s += levy.atoms[j.atom].zeta;
            n += 1;
        }
        (s, n)
    }

    /// `J(t) = ∫_0^t ∫ ζ Ñ(ds, dζ)`.
    pub fn compensated_jump_sum(&self, path: usize, t: f64) -> f64 {
        let Some(levy) = &self.levy else {
            return 0.0;
        };
        let drift: f64 = levy.atoms.iter().map(|a| a.zeta * a.nu).sum();
        self.jump_state(path, t).0 - drift * t
    }

    /// `Σ c_α Π h_{α_j}(θ_j)` on every path.
    pub fn evaluate(&self, f: &HermiteChaos) -> Result<Vec<f64>> {
        if f.max_variable() > self.k() {
            return Err(ChaosError::TruncationMismatch(format!(
                "element uses variable {} but the ensemble has K = {}",
                f.max_variable(),
                self.k()
            )));
        }
        let terms: Vec<(Vec<u32>, f64)> = f.terms().map(|(a, c)| (a.entries().to_vec(), *c)).collect();
        let vars = f.max_variable();
        let order = f.max_order();
        Ok((0..self.n_paths)
            .into_par_iter()
            .map(|p| {
                let th = self.theta(p);
                let mut table = Vec::with_capacity(vars);
                let mut buf = Vec::new();
                for t in th.iter().take(vars) {
                    hermite_poly_all(order, *t, &mut buf);
                    table.push(buf.clone());
                }
                terms
                    .iter()
                    .map(|(a, c)| {
                        let mut prod = *c;
                        for (j, &e) in a.iter().enumerate() {
                            if e > 0 {
                                prod *= table[j][e as usize];
                            }
                        }
                        prod
                    })
                    .sum()
            })
            .collect())
    }

    /// Pathwise value of a kernel chaos from the grid increments.
    pub fn evaluate_kernel(&self, f: &KernelChaos) -> Result<Vec<f64>> {
        if f.grid() != self.grid() {
            return Err(ChaosError::InvalidArgument("kernel grid differs from the ensemble grid".into()));
        }
        Ok((0..self.n_paths).into_par_iter().map(|p| f.evaluate_increments(&self.increments(p))).collect())
    }
}

/// `B(t) = Σ_k E_k(t) θ_k` on every path (chaos part only).
pub fn brownian_path(ens: &McEnsemble, t: f64) -> Vec<f64> {
    let k = ens.k();
    let e: Vec<f64> = match ens.grid().index_of(t) {
        Some(i) => (1..=k).map(|j| ens.basis.big_e(j, i)).collect(),
        None => (1..=k).map(|j| ens.basis.big_e_at(j, t)).collect(),
    };
    (0..ens.n_paths).map(|p| ens.theta(p).iter().zip(&e).map(|(a, b)| a * b).sum()).collect()
}

/// `Σ_jumps γ(τ, ζ) − ∫_0^T Σ_j γ(s, ζ_j) ν_j ds` per path.
///
/// `gamma(i, j)` is the value on cell `[t_i, t_{i+1})` at atom `j`.
pub fn compensated_jump_integral(ens: &McEnsemble, gamma: impl Fn(usize, usize) -> f64 + Sync) -> Vec<f64> {
    let Some(levy) = ens.levy() else {
        return vec![0.0; ens.n_paths];
    };
    let grid = *ens.grid();
    let mut comp = 0.0;
    for i in 0..grid.steps {
        for (j, a) in levy.atoms.iter().enumerate() {
            comp += gamma(i, j) * a.nu * grid.dt();
        }
    }
    (0..ens.n_paths)
        .into_par_iter()
        .map(|p| ens.jumps(p).iter().map(|jp| gamma(grid.cell_of(jp.time), jp.atom)).sum::<f64>() - comp)
        .collect()
}

/// Deviations of the jump-derivative rules for exponential functionals.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct JumpDerivativeReport {
    /// `φ(G) = exp(∫∫ ln(1+γ) Ñ)`: adding a jump multiplies by `1 + γ`.
    pub multiplicative: f64,
    /// `φ(G) = exp(∫∫ γ Ñ)`: the increment is `exp(G)(e^γ − 1)`.
    pub exponential: f64,
    pub checked: usize,
}

/// Adds one jump at every cell and atom on the first paths and compares the
/// finite-difference jump derivative with the closed-form rules.
pub fn jump_exponential_checks(
    ens: &McEnsemble,
    gamma: impl Fn(usize, usize) -> f64 + Sync,
    paths: usize,
) -> Result<JumpDerivativeReport> {
    let Some(levy) = ens.levy() else {
        return Ok(JumpDerivativeReport { multiplicative: 0.0, exponential: 0.0, checked: 0 });
    };
    let grid = *ens.grid();
    for i in 0..grid.steps {
        for j in 0..levy.len() {
            if 1.0 + gamma(i, j) <= 0.0 {
                return Err(ChaosError::Domain(format!("1 + γ ≤ 0 at cell {i}, atom {j}")));
            }
        }
    }
    let log_g = compensated_jump_integral(ens, |i, j| (1.0 + gamma(i, j)).ln());
    let lin_g = compensated_jump_integral(ens, &gamma);
    let mut mult: f64 = 0.0;
    let mut expo: f64 = 0.0;
    let mut checked = 0;
    for p in 0..paths.min(ens.n_paths) {
        let (phi, psi) = (log_g[p].exp(), lin_g[p].exp());
        for i in 0..grid.steps {
            for j in 0..levy.len() {
                let g = gamma(i, j);
                let d1 = (log_g[p] + (1.0 + g).ln()).exp() - phi;
                let want1 = phi * g;
                mult = mult.max(rel(d1, want1));
                let d2 = (lin_g[p] + g).exp() - psi;
                let want2 = psi * g.exp_m1();
                expo = expo.max(rel(d2, want2));
                checked += 1;
            }
        }
    }
    Ok(JumpDerivativeReport { multiplicative: mult, exponential: expo, checked })
}

fn rel(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        a.abs()
    } else {
        ((a - b) / b).abs()
    }
}

/// Least-squares fit of targets on polynomial features.
#[derive(Clone, Debug)]
pub struct Regression {
    /// Exponent vectors of the monomials, one per coefficient.
    pub monomials: Vec<Vec<u32>>,
    /// Coefficients in the raw feature units.
    pub coefficients: Vec<f64>,
    pub stderr: Vec<f64>,
    pub fitted: Vec<f64>,
    pub residual_sd: f64,
}

impl Regression {
    /// Evaluates the fitted polynomial at a feature vector.
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.monomials
            .iter()
            .zip(&self.coefficients)
            .map(|(m, c)| c * m.iter().zip(x).map(|(&e, v)| v.powi(e as i32)).product::<f64>())
            .sum()
    }

    pub fn coefficient(&self, exponents: &[u32]) -> Option<(f64, f64)> {
        self.monomials.iter().position(|m| m == exponents).map(|i| (self.coefficients[i], self.stderr[i]))
    }
}

pub const RIDGE: f64 = 1e-8;

const REDUCE_CHUNK: usize = 4096;

/// All exponent vectors over `nf` features with total degree `≤ degree`.
pub fn monomials(nf: usize, degree: usize) -> Vec<Vec<u32>> {
    let mut out = vec![vec![0u32; nf]];
    for d in 1..=degree {
        let mut cur = vec![0u32; nf];
        fill(&mut out, &mut cur, 0, d as u32);
    }
    out
}

fn fill(out: &mut Vec<Vec<u32>>, cur: &mut Vec<u32>, pos: usize, left: u32) {
    if pos + 1 == cur.len() {
        cur[pos] = left;
        out.push(cur.clone());
        cur[pos] = 0;
        return;
    }
    for e in (0..=left).rev() {
        cur[pos] = e;
        fill(out, cur, pos + 1, left - e);
    }
    cur[pos] = 0;
}

/// Ridge least squares of `targets` on monomials of `features[f][path]`.
pub fn regress(targets: &[f64], features: &[Vec<f64>], degree: usize, weights: Option<&[f64]>) -> Result<Regression> {
    let nf = features.len();
    let mons = if nf == 0 { vec![vec![]] } else { monomials(nf, degree) };
    regress_on(targets, features, mons, weights)
}

/// As [`regress`], on an explicit list of exponent vectors.
pub fn regress_on(
    targets: &[f64],
    features: &[Vec<f64>],
    mons: Vec<Vec<u32>>,
    weights: Option<&[f64]>,
) -> Result<Regression> {
    let n = targets.len();
    if features.iter().any(|f| f.len() != n) {
        return Err(ChaosError::InvalidArgument("feature and target lengths differ".into()));
    }
    if mons.iter().any(|m| m.len() != features.len()) {
        return Err(ChaosError::InvalidArgument("monomial arity differs from the feature count".into()));
    }
    let q = mons.len();
    if n <= q {
        return Err(ChaosError::InvalidArgument(format!("{n} samples for {q} regressors")));
    }
    // scale features to unit RMS for conditioning
    let scale: Vec<f64> = features
        .iter()
        .map(|f| {
            let rms = (f.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
            if rms > 0.0 {
                rms
            } else {
                1.0
            }
        })
        .collect();
    let design = |p: usize, out: &mut [f64]| {
        for (slot, m) in out.iter_mut().zip(&mons) {
            let mut v = 1.0;
            for (f, &e) in m.iter().enumerate() {
                if e > 0 {
                    v *= (features[f][p] / scale[f]).powi(e as i32);
                }
            }
            *slot = v;
        }
    };
    // fixed chunks summed in order keep the result independent of scheduling
    let chunks = n.div_ceil(REDUCE_CHUNK);
    let partials: Vec<(Vec<f64>, Vec<f64>, f64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let (mut ata, mut atb, mut ws) = (vec![0.0; q * q], vec![0.0; q], 0.0);
            let mut row = vec![0.0; q];
            for p in c * REDUCE_CHUNK..((c + 1) * REDUCE_CHUNK).min(n) {
                design(p, &mut row);
                let w = weights.map(|w| w[p]).unwrap_or(1.0);
                for a in 0..q {
                    atb[a] += w * row[a] * targets[p];
                    for b in 0..q {
                        ata[a * q + b] += w * row[a] * row[b];
                    }
                }
                ws += w;
            }
            (ata, atb, ws)
        })
        .collect();
    let (mut ata, mut atb, mut wsum) = (vec![0.0; q * q], vec![0.0; q], 0.0);
    for (a2, b2, w2) in partials {
        for (x, y) in ata.iter_mut().zip(a2) {
            *x += y;
        }
        for (x, y) in atb.iter_mut().zip(b2) {
            *x += y;
        }
        wsum += w2;
    }
    let mut m = DMatrix::<f64>::from_row_slice(q, q, &ata) / wsum;
    for a in 0..q {
        m[(a, a)] += RIDGE;
    }
    let rhs = nalgebra::DVector::<f64>::from_vec(atb) / wsum;
    let chol = m.clone().cholesky().ok_or(ChaosError::RankDeficient(0))?;
    let diag_min = (0..q).map(|i| chol.l()[(i, i)]).fold(f64::INFINITY, f64::min);
    if diag_min < 1e-7 {
        return Err(ChaosError::RankDeficient(0));
    }
    let beta = chol.solve(&rhs);
    let mut fitted = vec![0.0; n];
    fitted.par_iter_mut().enumerate().for_each(|(p, f)| {
        let mut row = vec![0.0; q];
        design(p, &mut row);
        *f = row.iter().zip(beta.iter()).map(|(a, b)| a * b).sum();
    });
    let rss: f64 = (0..n)
        .map(|p| {
            let w = weights.map(|w| w[p]).unwrap_or(1.0);
            w * (targets[p] - fitted[p]).powi(2)
        })
        .sum();
    let sigma2 = rss / wsum * n as f64 / (n - q) as f64;
    let inv = chol.inverse();
    let mut coefficients = vec![0.0; q];
    let mut stderr = vec![0.0; q];
    for (i, m) in mons.iter().enumerate() {
        let s: f64 = m.iter().enumerate().map(|(f, &e)| scale[f].powi(e as i32)).product();
        coefficients[i] = beta[i] / s;
        stderr[i] = (sigma2 * inv[(i, i)] / n as f64).sqrt() / s;
    }
    Ok(Regression { monomials: mons, coefficients, stderr, fitted, residual_sd: sigma2.sqrt() })
}

/// `E[targets | F_{t_i}]` by regression on `B̃(t_i)` and, with jumps, the jump sum.
pub fn regress_conditional(targets: &[f64], i: usize, ens: &McEnsemble, degree: usize) -> Result<Regression> {
    let features = state_features(ens, i);
    regress(targets, &features, degree, None).map_err(|e| match e {
        ChaosError::RankDeficient(_) => ChaosError::RankDeficient(i),
        other => other,
    })
}

/// `B̃(t_i)` and, if the ensemble has jumps, `Σ ζ` over jumps up to `t_i`.
pub fn state_features(ens: &McEnsemble, i: usize) -> Vec<Vec<f64>> {
    let t = ens.grid().t(i);
    let mut f = vec![(0..ens.n_paths()).map(|p| ens.brownian(p)[i]).collect::<Vec<f64>>()];
    if ens.levy().is_some() {
        f.push((0..ens.n_paths()).map(|p| ens.jump_state(p, t).0).collect());
    }
    f
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monomial_count() {
        assert_eq!(monomials(2, 3).len(), 10);
        assert_eq!(monomials(1, 3).len(), 4);
        assert_eq!(monomials(3, 0).len(), 1);
    }

    #[test]
    fn deterministic_in_seed() {
        let g = TimeGrid::new(1.0, 8).unwrap();
        let levy = LevyModel::new(vec![Atom { zeta: 0.5, nu: 1.0 }]).unwrap();
        let a = build_ensemble(7, 3000, 5, g, Some(&levy)).unwrap();
        let b = build_ensemble(7, 3000, 5, g, Some(&levy)).unwrap();
        assert_eq!(a.theta, b.theta);
        assert_eq!(a.brownian, b.brownian);
        assert_eq!(a.jumps, b.jumps);
    }

    #[test]
    fn no_levy_no_jumps() {
        let g = TimeGrid::new(1.0, 4).unwrap();
        let a = build_ensemble(1, 10, 3, g, None).unwrap();
        assert!((0..10).all(|p| a.jumps(p).is_empty()));
    }

    #[test]
    fn regression_recovers_polynomial() {
        let x: Vec<f64> = (0..200).map(|i| i as f64 / 50.0 - 2.0).collect();
        let y: Vec<f64> = x.iter().map(|v| 1.0 - 2.0 * v + 0.5 * v * v * v).collect();
        let r = regress(&y, &[x], 3, None).unwrap();
        assert!(r.fitted.iter().zip(&y).all(|(a, b)| (a - b).abs() < 1e-6));
        assert!((r.coefficient(&[3]).unwrap().0 - 0.5).abs() < 1e-6);
    }
}

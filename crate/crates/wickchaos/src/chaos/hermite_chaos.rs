//! Random variables and processes expanded in the `H_α` basis.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::basis::HermiteBasis;
use super::multi_index::MultiIndex;
use super::quadrature::TimeGrid;
use crate::error::{ChaosError, Result};

/// Finite projection: at most `k` variables and order at most `n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Truncation {
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "N")]
    pub n: usize,
}

impl Truncation {
    pub const DEFAULT_K: usize = 30;
    pub const DEFAULT_N: usize = 6;

    pub fn new(k: usize, n: usize) -> Self {
        assert!(k >= 1 && n >= 1, "truncation needs K >= 1 and N >= 1");
        Self { k, n }
    }

    pub fn admits(&self, alpha: &MultiIndex) -> bool {
        alpha.len() <= self.k && alpha.order() <= self.n
    }

    pub fn join(&self, other: &Truncation) -> Truncation {
        Truncation { k: self.k.max(other.k), n: self.n.max(other.n) }
    }
}

impl Default for Truncation {
    fn default() -> Self {
        Self { k: Self::DEFAULT_K, n: Self::DEFAULT_N }
    }
}

/// What to do with terms that leave the truncation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Overflow {
    /// Any non-zero term outside the truncation is an error.
    #[default]
    Strict,
    /// Drop such terms and accumulate their `α! c²` mass.
    Lenient,
}

/// `F = Σ_α c_α H_α` at a finite truncation.
#[derive(Clone, Debug, PartialEq)]
pub struct HermiteChaos {
    truncation: Truncation,
    coeffs: BTreeMap<MultiIndex, f64>,
    clipped: f64,
}

impl HermiteChaos {
    pub fn zero(truncation: Truncation) -> Self {
        Self { truncation, coeffs: BTreeMap::new(), clipped: 0.0 }
    }

    pub fn constant(truncation: Truncation, c: f64) -> Self {
        let mut out = Self::zero(truncation);
        out.set(MultiIndex::zero(), c).expect("constant fits any truncation");
        out
    }

    /// `c · H_α`.
    pub fn monomial(truncation: Truncation, alpha: MultiIndex, c: f64) -> Result<Self> {
        let mut out = Self::zero(truncation);
        out.set(alpha, c)?;
        Ok(out)
    }

    pub fn from_terms(truncation: Truncation, terms: impl IntoIterator<Item = (MultiIndex, f64)>) -> Result<Self> {
        let mut out = Self::zero(truncation);
        for (a, c) in terms {
            out.add_term(a, c, Overflow::Strict)?;
        }
        Ok(out)
    }

    pub fn truncation(&self) -> Truncation {
        self.truncation
    }

    /// `α! c²` mass dropped by lenient operations that produced this element.
    pub fn clipped_mass(&self) -> f64 {
        self.clipped
    }

    pub fn with_truncation(mut self, truncation: Truncation) -> Result<Self> {
        for a in self.coeffs.keys() {
            if !truncation.admits(a) {
                return Err(out_of_range(a, &truncation, 0.0));
            }
        }
        self.truncation = truncation;
        Ok(self)
    }

    pub fn coeff(&self, alpha: &MultiIndex) -> f64 {
        self.coeffs.get(alpha).copied().unwrap_or(0.0)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, &f64)> {
        self.coeffs.iter()
    }

    pub fn n_terms(&self) -> usize {
        self.coeffs.len()
    }

    pub fn set(&mut self, alpha: MultiIndex, c: f64) -> Result<()> {
        if !self.truncation.admits(&alpha) {
            return Err(out_of_range(&alpha, &self.truncation, 0.0));
        }
        if c == 0.0 {
            self.coeffs.remove(&alpha);
        } else {
            self.coeffs.insert(alpha, c);
        }
        Ok(())
    }

    /// Adds `c` at `α`, honouring the overflow policy.
    pub fn add_term(&mut self, alpha: MultiIndex, c: f64, mode: Overflow) -> Result<()> {
        if c == 0.0 {
            return Ok(());
        }
        if !self.truncation.admits(&alpha) {
            let mass = alpha.factorial_f64() * c * c;
            return match mode {
                Overflow::Strict => Err(out_of_range(&alpha, &self.truncation, mass)),
                Overflow::Lenient => {
                    self.clipped += mass;
                    Ok(())
                }
            };
        }
        *self.coeffs.entry(alpha).or_insert(0.0) += c;
        Ok(())
    }

    pub(crate) fn add_clipped(&mut self, mass: f64) {
        self.clipped += mass;
    }

    /// Largest order carried by a non-zero coefficient.
    pub fn max_order(&self) -> usize {
        self.coeffs.keys().map(|a| a.order()).max().unwrap_or(0)
    }

    pub fn max_variable(&self) -> usize {
        self.coeffs.keys().map(|a| a.len()).max().unwrap_or(0)
    }

    /// `E[F] = c_0`.
    pub fn expectation(&self) -> f64 {
        self.coeff(&MultiIndex::zero())
    }

    /// `sqrt(Σ α! c_α² (2ℕ)^{kα})`; `k = 0` is the `L²(P)` norm.
    pub fn hida_norm(&self, k: f64) -> f64 {
        self.coeffs.iter().map(|(a, c)| a.factorial_f64() * c * c * a.two_n_pow(k)).sum::<f64>().sqrt()
    }

    pub fn l2_norm_sq(&self) -> f64 {
        self.coeffs.iter().map(|(a, c)| a.factorial_f64() * c * c).sum()
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = self.clone();
        for v in out.coeffs.values_mut() {
            *v *= s;
        }
        out.coeffs.retain(|_, v| *v != 0.0);
        out
    }

    /// Linear combination `a·self + b·other`; the truncation is the join of both.
    pub fn axpby(&self, a: f64, other: &HermiteChaos, b: f64) -> Self {
        let mut out = Self::zero(self.truncation.join(&other.truncation));
        for (k, v) in &self.coeffs {
            *out.coeffs.entry(k.clone()).or_insert(0.0) += a * v;
        }
        for (k, v) in &other.coeffs {
            *out.coeffs.entry(k.clone()).or_insert(0.0) += b * v;
        }
        out.coeffs.retain(|_, v| *v != 0.0);
        out.clipped = a * a * self.clipped + b * b * other.clipped;
        out
    }

    pub fn add(&self, other: &HermiteChaos) -> Self {
        self.axpby(1.0, other, 1.0)
    }

    pub fn sub(&self, other: &HermiteChaos) -> Self {
        self.axpby(1.0, other, -1.0)
    }

    /// Largest coefficient difference over the union of supports.
    pub fn max_abs_diff(&self, other: &HermiteChaos) -> f64 {
        let mut m: f64 = 0.0;
        for (k, v) in &self.coeffs {
            m = m.max((v - other.coeff(k)).abs());
        }
        for (k, v) in &other.coeffs {
            if !self.coeffs.contains_key(k) {
                m = m.max(v.abs());
            }
        }
        m
    }

    /// Keeps only coefficients of the given order.
    pub fn homogeneous(&self, order: usize) -> Self {
        let mut out = Self::zero(self.truncation);
        for (a, c) in &self.coeffs {
            if a.order() == order {
                out.coeffs.insert(a.clone(), *c);
            }
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(ChaosJson::from(self)).expect("chaos serializes")
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        let j: ChaosJson = serde_json::from_value(v.clone()).map_err(|e| ChaosError::InvalidArgument(e.to_string()))?;
        let mut out = Self::zero(j.truncation);
        for t in j.coefficients {
            out.set(t.alpha, t.c)?;
        }
        Ok(out)
    }
}

fn out_of_range(alpha: &MultiIndex, tr: &Truncation, dropped: f64) -> ChaosError {
    if alpha.len() > tr.k {
        ChaosError::VariableOverflow { alpha: alpha.clone(), k: tr.k }
    } else {
        ChaosError::OrderOverflow { alpha: alpha.clone(), cap: tr.n, dropped }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChaosJson {
    truncation: Truncation,
    coefficients: Vec<TermJson>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TermJson {
    alpha: MultiIndex,
    c: f64,
}

impl From<&HermiteChaos> for ChaosJson {
    fn from(f: &HermiteChaos) -> Self {
        Self {
            truncation: f.truncation,
            coefficients: f.coeffs.iter().map(|(a, c)| TermJson { alpha: a.clone(), c: *c }).collect(),
        }
    }
}

/// `⟨F, f⟩ = Σ α! a_α b_α`.
pub fn dual_action(f: &HermiteChaos, g: &HermiteChaos) -> f64 {
    let (small, large) = if f.n_terms() <= g.n_terms() { (f, g) } else { (g, f) };
    small
        .terms()
        .map(|(a, c)| {
            let d = large.coeff(a);
            if d == 0.0 {
                0.0
            } else {
                a.factorial_f64() * c * d
            }
        })
        .sum()
}

pub fn expectation(f: &HermiteChaos) -> f64 {
    f.expectation()
}

pub fn hida_norm(f: &HermiteChaos, k: f64) -> f64 {
    f.hida_norm(k)
}

/// `w_f = Σ_k (f, e_k) H_{ε^(k)}` for a grid function `f` on `[0, T]`.
pub fn wiener_integral_chaos(f: &[f64], basis: &HermiteBasis, truncation: Truncation) -> Result<HermiteChaos> {
    if f.len() != basis.grid().len() {
        return Err(ChaosError::InvalidArgument(format!(
            "grid function has {} values, grid has {}",
            f.len(),
            basis.grid().len()
        )));
    }
    wiener_from_coefficients(&basis.project(f), truncation)
}

/// `Σ_k c_k H_{ε^(k)}` from basis coefficients `c_1, c_2, …`.
pub fn wiener_from_coefficients(c: &[f64], truncation: Truncation) -> Result<HermiteChaos> {
    let mut out = HermiteChaos::zero(truncation);
    for (j, v) in c.iter().enumerate() {
        out.add_term(MultiIndex::unit(j + 1), *v, Overflow::Strict)?;
    }
    Ok(out)
}

/// `B(t) = Σ_k E_k(t) H_{ε^(k)}` at an arbitrary `t ∈ [0, T]`.
pub fn brownian_chaos(t: f64, basis: &HermiteBasis, truncation: Truncation) -> Result<HermiteChaos> {
    check_time(t, basis.grid())?;
    let c: Vec<f64> = match basis.grid().index_of(t) {
        Some(i) => (1..=basis.k()).map(|k| basis.big_e(k, i)).collect(),
        None => (1..=basis.k()).map(|k| basis.big_e_at(k, t)).collect(),
    };
    wiener_from_coefficients(&c, truncation)
}

/// `B(t_i)` at a grid index.
pub fn brownian_chaos_at(i: usize, basis: &HermiteBasis, truncation: Truncation) -> Result<HermiteChaos> {
    let c: Vec<f64> = (1..=basis.k()).map(|k| basis.big_e(k, i)).collect();
    wiener_from_coefficients(&c, truncation)
}

/// `Ḃ(t) = Σ_k e_k(t) H_{ε^(k)}`.
pub fn singular_white_noise(t: f64, basis: &HermiteBasis, truncation: Truncation) -> Result<HermiteChaos> {
    check_time(t, basis.grid())?;
    let mut buf = Vec::new();
    super::hermite::hermite_functions(basis.k(), t, &mut buf);
    wiener_from_coefficients(&buf, truncation)
}

fn check_time(t: f64, grid: &TimeGrid) -> Result<()> {
    if !(0.0..=grid.horizon * (1.0 + 1e-12)).contains(&t) {
        return Err(ChaosError::InvalidArgument(format!("time {t} outside [0, {}]", grid.horizon)));
    }
    Ok(())
}

/// `Σ_{α under cutoff} (2ℕ)^{−qα}` by dynamic programming over variables.
pub fn summability_probe(q: f64, cutoff: Truncation) -> f64 {
    // dp[n] = Σ over multi-indices on the variables seen so far with |α| = n
    let mut dp = vec![0.0; cutoff.n + 1];
    dp[0] = 1.0;
    for j in 1..=cutoff.k {
        let r = (2.0 * j as f64).powf(-q);
        let mut next = vec![0.0; cutoff.n + 1];
        for (n, &v) in dp.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            let mut p = 1.0;
            for a in 0..=(cutoff.n - n) {
                next[n + a] += v * p;
                p *= r;
            }
        }
        dp = next;
    }
    dp.iter().sum()
}

/// `Y(t) = Σ_α a_α(t) H_α` sampled on a time grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ChaosProcess {
    truncation: Truncation,
    grid: TimeGrid,
    coeffs: BTreeMap<MultiIndex, Vec<f64>>,
}

impl ChaosProcess {
    pub fn zero(truncation: Truncation, grid: TimeGrid) -> Self {
        Self { truncation, grid, coeffs: BTreeMap::new() }
    }

    /// Deterministic process `f(t)` as the `α = 0` coefficient.
    pub fn deterministic(truncation: Truncation, grid: TimeGrid, f: Vec<f64>) -> Result<Self> {
        let mut out = Self::zero(truncation, grid);
        out.set(MultiIndex::zero(), f)?;
        Ok(out)
    }

    /// Builds a process from one chaos element per grid point.
    pub fn from_slices(grid: TimeGrid, slices: &[HermiteChaos]) -> Result<Self> {
        if slices.len() != grid.len() {
            return Err(ChaosError::InvalidArgument("one slice per grid point is required".into()));
        }
        let tr = slices.iter().fold(slices[0].truncation(), |t, s| t.join(&s.truncation()));
        let mut out = Self::zero(tr, grid);
        for (i, s) in slices.iter().enumerate() {
            for (a, c) in s.terms() {
                out.coeffs.entry(a.clone()).or_insert_with(|| vec![0.0; grid.len()])[i] = *c;
            }
        }
        Ok(out)
    }

    pub fn truncation(&self) -> Truncation {
        self.truncation
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn set(&mut self, alpha: MultiIndex, values: Vec<f64>) -> Result<()> {
        if !self.truncation.admits(&alpha) {
            return Err(out_of_range(&alpha, &self.truncation, 0.0));
        }
        if values.len() != self.grid.len() {
            return Err(ChaosError::InvalidArgument("coefficient function must live on the grid".into()));
        }
        self.coeffs.insert(alpha, values);
        Ok(())
    }

    pub fn coeff(&self, alpha: &MultiIndex) -> Option<&[f64]> {
        self.coeffs.get(alpha).map(|v| v.as_slice())
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, &Vec<f64>)> {
        self.coeffs.iter()
    }

    /// The chaos element `Y(t_i)`.
    pub fn at(&self, i: usize) -> HermiteChaos {
        let mut out = HermiteChaos::zero(self.truncation);
        for (a, v) in &self.coeffs {
            if v[i] != 0.0 {
                out.coeffs.insert(a.clone(), v[i]);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tr() -> Truncation {
        Truncation::new(5, 4)
    }

    #[test]
    fn hida_norm_examples() {
        assert_eq!(HermiteChaos::zero(tr()).hida_norm(1.0), 0.0);
        let h1 = HermiteChaos::monomial(tr(), MultiIndex::unit(1), 1.0).unwrap();
        assert!((h1.hida_norm(0.0) - 1.0).abs() < 1e-15);
        for j in 1..=5 {
            let h = HermiteChaos::monomial(tr(), MultiIndex::unit(j), 1.0).unwrap();
            assert!((h.hida_norm(1.0) - (2.0 * j as f64).sqrt()).abs() < 1e-14);
        }
    }

    #[test]
    fn dual_action_examples() {
        let a = MultiIndex::new(vec![2, 1]);
        let h = HermiteChaos::monomial(tr(), a.clone(), 1.0).unwrap();
        assert_eq!(dual_action(&h, &h), 2.0);
        let f = HermiteChaos::from_terms(tr(), [(MultiIndex::zero(), 0.3), (a, 2.0)]).unwrap();
        let one = HermiteChaos::constant(tr(), 1.0);
        assert_eq!(dual_action(&f, &one), f.expectation());
        let g =
            HermiteChaos::from_terms(tr(), [(MultiIndex::unit(2), -1.5), (MultiIndex::new(vec![2, 1]), 0.5)]).unwrap();
        assert_eq!(dual_action(&f, &g), dual_action(&g, &f));
    }

    #[test]
    fn strict_rejects_out_of_range() {
        let mut f = HermiteChaos::zero(tr());
        assert!(f.add_term(MultiIndex::unit(6), 1.0, Overflow::Strict).is_err());
        assert!(f.add_term(MultiIndex::new(vec![5]), 1.0, Overflow::Strict).is_err());
        f.add_term(MultiIndex::new(vec![5]), 2.0, Overflow::Lenient).unwrap();
        assert!((f.clipped_mass() - 120.0 * 4.0).abs() < 1e-9);
    }

    #[test]
    fn summability_empty_cutoff_and_wallis_limit() {
        assert_eq!(summability_probe(2.0, Truncation { k: 0, n: 0 }), 1.0);
        // Π_j (1 − (2j)^{−2})^{−1} = π/2
        let s = summability_probe(2.0, Truncation::new(4000, 12));
        assert!((s - std::f64::consts::FRAC_PI_2).abs() < 1e-3);
    }

    #[test]
    fn json_round_trip() {
        let f =
            HermiteChaos::from_terms(tr(), [(MultiIndex::zero(), 1.0), (MultiIndex::new(vec![0, 2]), -0.25)]).unwrap();
        let v = f.to_json();
        assert_eq!(v["truncation"]["K"], 5);
        assert_eq!(HermiteChaos::from_json(&v).unwrap(), f);
    }
}

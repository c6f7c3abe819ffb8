//! Finite multi-indices in canonical form.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{ChaosError, Result};

/// A finite multi-index `α = (α_1, …, α_m)` with trailing zeros stripped.
///
/// Variables are 1-based in the maths and 0-based in `entries`, so `entries[0]`
/// is the power of `θ_1`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct MultiIndex {
    entries: Vec<u32>,
}

impl MultiIndex {
    pub fn zero() -> Self {
        Self { entries: Vec::new() }
    }

    pub fn new(mut entries: Vec<u32>) -> Self {
        while entries.last() == Some(&0) {
            entries.pop();
        }
        Self { entries }
    }

    /// The unit index `ε^(k)`, `k ≥ 1`.
    pub fn unit(k: usize) -> Self {
        assert!(k >= 1, "unit index is 1-based");
        let mut e = vec![0; k];
        e[k - 1] = 1;
        Self { entries: e }
    }

    /// Builds `ε^(k_1) + … + ε^(k_n)` from 1-based variable labels.
    pub fn from_labels(labels: &[usize]) -> Self {
        let len = labels.iter().copied().max().unwrap_or(0);
        let mut e = vec![0u32; len];
        for &k in labels {
            assert!(k >= 1, "variable labels are 1-based");
            e[k - 1] += 1;
        }
        Self::new(e)
    }

    pub fn entries(&self) -> &[u32] {
        &self.entries
    }

    /// Number of stored entries (index of the last non-zero variable).
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    /// `α_k` with a 1-based `k`; zero beyond the stored length.
    pub fn get(&self, k: usize) -> u32 {
        if k == 0 || k > self.entries.len() {
            0
        } else {
            self.entries[k - 1]
        }
    }

    /// `|α| = Σ α_j`.
    pub fn order(&self) -> usize {
        self.entries.iter().map(|&a| a as usize).sum()
    }

    pub fn add(&self, other: &MultiIndex) -> MultiIndex {
        let n = self.entries.len().max(other.entries.len());
        let mut e = vec![0u32; n];
        for (i, slot) in e.iter_mut().enumerate() {
            *slot = self.entries.get(i).copied().unwrap_or(0) + other.entries.get(i).copied().unwrap_or(0);
        }
        MultiIndex::new(e)
    }

    pub fn add_unit(&self, k: usize) -> MultiIndex {
        let mut e = self.entries.clone();
        if e.len() < k {
            e.resize(k, 0);
        }
        e[k - 1] += 1;
        MultiIndex::new(e)
    }

    /// `α − ε^(k)`, or `None` when `α_k = 0`.
    pub fn sub_unit(&self, k: usize) -> Option<MultiIndex> {
        if self.get(k) == 0 {
            return None;
        }
        let mut e = self.entries.clone();
        e[k - 1] -= 1;
        Some(MultiIndex::new(e))
    }

    /// Variable labels with multiplicity, ascending: `(2,0,1) → [1,1,3]`.
    pub fn labels(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.order());
        for (i, &a) in self.entries.iter().enumerate() {
            for _ in 0..a {
                out.push(i + 1);
            }
        }
        out
    }

    /// Non-zero positions as `(k, α_k)` with 1-based `k`.
    pub fn support(&self) -> impl Iterator<Item = (usize, u32)> + '_ {
        self.entries.iter().enumerate().filter(|(_, &a)| a > 0).map(|(i, &a)| (i + 1, a))
    }

    /// `α! = Π α_j!` as an exact integer.
    pub fn factorial(&self) -> Result<u128> {
        let mut acc: u128 = 1;
        for &a in &self.entries {
            for m in 2..=a as u128 {
                acc = acc.checked_mul(m).ok_or_else(|| ChaosError::Overflow(format!("{self:?}! exceeds u128")))?;
            }
        }
        Ok(acc)
    }

    /// `α!` as a float, through log-space when the product is huge.
    pub fn factorial_f64(&self) -> f64 {
        match self.factorial() {
            Ok(v) => v as f64,
            Err(_) => self.ln_factorial().exp(),
        }
    }

    pub fn ln_factorial(&self) -> f64 {
        self.entries.iter().map(|&a| ln_factorial(a as usize)).sum()
    }

    /// `(2ℕ)^{qα} = Π_j (2j)^{q α_j}`.
    pub fn two_n_pow(&self, q: f64) -> f64 {
        let mut ln = 0.0;
        for (j, a) in self.support() {
            ln += q * a as f64 * (2.0 * j as f64).ln();
        }
        ln.exp()
    }

    /// All multi-indices with `len ≤ k` and `|α| ≤ n`, in graded order.
    pub fn enumerate(k: usize, n: usize) -> Vec<MultiIndex> {
        let mut out = Vec::new();
        for order in 0..=n {
            let mut cur = vec![0u32; k];
            fill(&mut cur, 0, order, &mut out);
        }
        out
    }

    /// All multi-indices with exactly `|α| = n` and `len ≤ k`.
    pub fn enumerate_order(k: usize, n: usize) -> Vec<MultiIndex> {
        let mut out = Vec::new();
        let mut cur = vec![0u32; k];
        fill(&mut cur, 0, n, &mut out);
        out
    }
}

fn fill(cur: &mut Vec<u32>, pos: usize, remaining: usize, out: &mut Vec<MultiIndex>) {
    if pos == cur.len() {
        if remaining == 0 {
            out.push(MultiIndex::new(cur.clone()));
        }
        return;
    }
    for a in (0..=remaining).rev() {
        cur[pos] = a as u32;
        fill(cur, pos + 1, remaining - a, out);
    }
    cur[pos] = 0;
}

pub fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|m| (m as f64).ln()).sum()
}

pub fn factorial_f64(n: usize) -> f64 {
    (2..=n).fold(1.0, |acc, m| acc * m as f64)
}

/// `α! = Π α_j!`; errors when the product does not fit in 128 bits.
pub fn mi_factorial(alpha: &MultiIndex) -> Result<u128> {
    alpha.factorial()
}

/// `Π_j (2j)^{q α_j}`.
pub fn two_n_pow(alpha: &MultiIndex, q: f64) -> f64 {
    alpha.two_n_pow(q)
}

impl fmt::Debug for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.entries)
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, a) in self.entries.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, ")")
    }
}

impl Serialize for MultiIndex {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.entries.serialize(s)
    }
}

impl<'de> Deserialize<'de> for MultiIndex {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Ok(MultiIndex::new(Vec::<u32>::deserialize(d)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_form_strips_trailing_zeros() {
        assert_eq!(MultiIndex::new(vec![1, 0, 0]), MultiIndex::new(vec![1]));
        assert!(MultiIndex::new(vec![0, 0]).is_zero());
    }

    #[test]
    fn factorial_examples() {
        assert_eq!(mi_factorial(&MultiIndex::zero()).unwrap(), 1);
        assert_eq!(mi_factorial(&MultiIndex::new(vec![3, 0, 2])).unwrap(), 12);
        assert_eq!(mi_factorial(&MultiIndex::unit(5)).unwrap(), 1);
        assert!(mi_factorial(&MultiIndex::new(vec![40])).is_err());
        let big = MultiIndex::new(vec![40]);
        assert!((big.factorial_f64().ln() - ln_factorial(40)).abs() < 1e-9);
    }

    #[test]
    fn two_n_pow_examples() {
        assert_eq!(two_n_pow(&MultiIndex::zero(), 3.7), 1.0);
        assert!((two_n_pow(&MultiIndex::new(vec![1, 1]), 1.0) - 8.0).abs() < 1e-12);
        assert!((two_n_pow(&MultiIndex::new(vec![0, 2]), -1.0) - 1.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn enumeration_counts() {
        // C(k + n, n) indices with |α| ≤ n over k variables
        assert_eq!(MultiIndex::enumerate(3, 2).len(), 10);
        assert_eq!(MultiIndex::enumerate_order(4, 3).len(), 20);
    }

    #[test]
    fn labels_round_trip() {
        let a = MultiIndex::new(vec![2, 0, 1]);
        assert_eq!(a.labels(), vec![1, 1, 3]);
        assert_eq!(MultiIndex::from_labels(&a.labels()), a);
    }
}

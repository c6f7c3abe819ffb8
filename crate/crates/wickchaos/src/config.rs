//! Problem configuration files (JSON, unknown keys rejected).
//!
//! ```json
//! {
//!   "grid": { "T": 1.0, "M": 32 },
//!   "levy": [ { "zeta": 0.4, "nu": 1.5 } ],
//!   "bsde": { "alpha1": 0.3, "beta1": [0.1, 0.2], "eta1": [0.1], "gamma": 1.0,
//!             "xi": { "c0": 1.0, "cB": 0.5, "cN": 0.0 } },
//!   "meanfield": { "mode": "with-derivative-drift", "cells": 8 },
//!   "bsvie": { "kernel": { "kind": "exp-decay" }, "xi_drift": 0.3, "beta": [0.2],
//!              "free": { "kind": "affine", "a": [1.0, 1.0], "b": 0.5, "pin": "terminal" } },
//!   "lq": { "x0": -2.0, "sigma": 0.3, "gamma": [0.05], "constrained": true },
//!   "cashflow": { "x0": 1.0, "memory": { "scale": 0.3, "rate": 1.5 }, "sigma0": 0.2,
//!                 "theta": { "c0": 2.0 } }
//! }
//! ```
//!
//! A time function is either a number or a list of polynomial coefficients
//! `[c₀, c₁, …]` in `t`. Jump coefficients are given per atom.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;
use thiserror::Error;

use crate::bsde::{LinearBsdeSpec, MeanFieldMode, TerminalAffine};
use crate::bsvie::{BsvieSpec, Drift, FreeTerm, KernelPreset, Pin, TimeFn};
use crate::chaos::TimeGrid;
use crate::control::{exp_memory, CashflowSpec, LqProblem};
use crate::mc::{Atom, LevyModel};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Parse(#[from] serde_json::Error),
    #[error("{0}")]
    Invalid(String),
}

type Result<T> = std::result::Result<T, ConfigError>;

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(rename = "M")]
    pub steps: usize,
}

/// Number or polynomial coefficients in `t`.
#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum TimeFnConfig {
    Constant(f64),
    Polynomial(Vec<f64>),
}

impl Default for TimeFnConfig {
    fn default() -> Self {
        Self::Constant(0.0)
    }
}

impl TimeFnConfig {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Self::Constant(c) => *c,
            Self::Polynomial(c) => c.iter().rev().fold(0.0, |acc, a| acc * t + a),
        }
    }

    pub fn to_fn(&self) -> TimeFn {
        let me = self.clone();
        Arc::new(move |t| me.eval(t))
    }

    fn sample(&self, grid: &TimeGrid) -> Vec<f64> {
        grid.points().iter().map(|&t| self.eval(t)).collect()
    }
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BsdeConfig {
    #[serde(default)]
    pub alpha1: TimeFnConfig,
    #[serde(default)]
    pub alpha2: TimeFnConfig,
    #[serde(default)]
    pub beta1: TimeFnConfig,
    #[serde(default)]
    pub beta2: TimeFnConfig,
    #[serde(default)]
    pub eta1: Vec<TimeFnConfig>,
    #[serde(default)]
    pub eta2: Vec<TimeFnConfig>,
    #[serde(default)]
    pub gamma: TimeFnConfig,
    #[serde(default)]
    pub xi: TerminalAffine,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeanfieldConfig {
    #[serde(default)]
    pub mode: MeanFieldMode,
    /// Cells per stitching interval; chosen from the norm estimate when absent.
    #[serde(default)]
    pub cells: Option<usize>,
    #[serde(default = "tol_tight")]
    pub tol: f64,
}

impl Default for MeanfieldConfig {
    fn default() -> Self {
        Self { mode: MeanFieldMode::default(), cells: None, tol: tol_tight() }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FreeConfig {
    Deterministic {
        f: TimeFnConfig,
    },
    Affine {
        #[serde(default)]
        a: TimeFnConfig,
        #[serde(default)]
        b: TimeFnConfig,
        #[serde(default)]
        c: TimeFnConfig,
        #[serde(default)]
        pin: Pin,
    },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BsvieConfig {
    pub kernel: KernelPreset,
    #[serde(default)]
    pub xi_drift: TimeFnConfig,
    #[serde(default)]
    pub beta: Vec<TimeFnConfig>,
    pub free: FreeConfig,
    #[serde(default = "tol_tight")]
    pub tol: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LqConfig {
    pub x0: f64,
    #[serde(default)]
    pub sigma: f64,
    #[serde(default)]
    pub gamma: Vec<f64>,
    #[serde(default = "yes")]
    pub constrained: bool,
    #[serde(default = "fifty")]
    pub max_iter: usize,
    #[serde(default = "tol_picard")]
    pub tol: f64,
}

#[derive(Clone, Copy, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemoryConfig {
    #[serde(default)]
    pub scale: f64,
    #[serde(default)]
    pub rate: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CashflowConfig {
    pub x0: f64,
    /// `b₀(t, s) = scale · e^{−rate (s − t)}`.
    #[serde(default)]
    pub memory: MemoryConfig,
    #[serde(default)]
    pub sigma0: TimeFnConfig,
    #[serde(default)]
    pub gamma0: Vec<TimeFnConfig>,
    pub theta: TerminalAffine,
    #[serde(default = "tol_tight")]
    pub tol: f64,
}

fn tol_tight() -> f64 {
    1e-12
}

fn tol_picard() -> f64 {
    1e-4
}

fn fifty() -> usize {
    50
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub grid: GridConfig,
    #[serde(default)]
    pub levy: Option<Vec<Atom>>,
    #[serde(default)]
    pub bsde: Option<BsdeConfig>,
    #[serde(default)]
    pub meanfield: Option<MeanfieldConfig>,
    #[serde(default)]
    pub bsvie: Option<BsvieConfig>,
    #[serde(default)]
    pub lq: Option<LqConfig>,
    #[serde(default)]
    pub cashflow: Option<CashflowConfig>,
}

impl ProblemConfig {
    pub fn from_str(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::from_str(&text)
    }

    pub fn time_grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.grid.horizon, self.grid.steps).map_err(|e| ConfigError::Invalid(format!("grid: {e}")))
    }

    pub fn levy_model(&self) -> Result<Option<LevyModel>> {
        match &self.levy {
            None => Ok(None),
            Some(atoms) => {
                LevyModel::new(atoms.clone()).map(Some).map_err(|e| ConfigError::Invalid(format!("levy: {e}")))
            }
        }
    }

    fn atoms(&self) -> usize {
        self.levy.as_ref().map(|a| a.len()).unwrap_or(0)
    }

    fn per_atom(&self, section: &str, field: &str, v: &[TimeFnConfig]) -> Result<()> {
        if !v.is_empty() && v.len() != self.atoms() {
            return Err(ConfigError::Invalid(format!(
                "{section}.{field}: {} entries for {} Lévy atoms",
                v.len(),
                self.atoms()
            )));
        }
        Ok(())
    }

    fn section<'a, T>(&self, name: &str, s: &'a Option<T>) -> Result<&'a T> {
        s.as_ref().ok_or_else(|| ConfigError::Invalid(format!("missing \"{name}\" section")))
    }

    /// The `bsde` section on the grid. Absent jump coefficients are zero.
    pub fn bsde_spec(&self) -> Result<LinearBsdeSpec> {
        let c = self.section("bsde", &self.bsde)?;
        let grid = self.time_grid()?;
        self.per_atom("bsde", "eta1", &c.eta1)?;
        self.per_atom("bsde", "eta2", &c.eta2)?;
        let mut s = LinearBsdeSpec::zero(grid, self.levy_model()?);
        s.alpha1 = c.alpha1.sample(&grid);
        s.alpha2 = c.alpha2.sample(&grid);
        s.beta1 = c.beta1.sample(&grid);
        s.beta2 = c.beta2.sample(&grid);
        s.gamma = c.gamma.sample(&grid);
        for (a, e) in c.eta1.iter().enumerate() {
            s.eta1[a] = e.sample(&grid);
        }
        for (a, e) in c.eta2.iter().enumerate() {
            s.eta2[a] = e.sample(&grid);
        }
        s.xi = c.xi;
        s.validate().map_err(|e| ConfigError::Invalid(format!("bsde: {e}")))?;
        Ok(s)
    }

    pub fn meanfield_settings(&self) -> MeanfieldConfig {
        self.meanfield.clone().unwrap_or_default()
    }

    pub fn bsvie_spec(&self) -> Result<(BsvieSpec, f64)> {
        let c = self.section("bsvie", &self.bsvie)?;
        let grid = self.time_grid()?;
        self.per_atom("bsvie", "beta", &c.beta)?;
        let phi = c.kernel.build(grid).map_err(|e| ConfigError::Invalid(format!("bsvie.kernel: {e}")))?;
        let mut beta: Vec<TimeFn> = c.beta.iter().map(|b| b.to_fn()).collect();
        beta.resize_with(self.atoms(), || TimeFnConfig::default().to_fn());
        let free = match &c.free {
            FreeConfig::Deterministic { f } => FreeTerm::Deterministic(f.to_fn()),
            FreeConfig::Affine { a, b, c, pin } => {
                FreeTerm::Affine { a: a.to_fn(), b: b.to_fn(), c: c.to_fn(), pin: *pin }
            }
        };
        let spec = BsvieSpec {
            grid,
            phi,
            xi_drift: Drift::Deterministic(c.xi_drift.to_fn()),
            beta,
            free,
            levy: self.levy_model()?,
        };
        spec.validate().map_err(|e| ConfigError::Invalid(format!("bsvie: {e}")))?;
        Ok((spec, c.tol))
    }

    pub fn lq_problem(&self) -> Result<(LqProblem, usize, f64)> {
        let c = self.section("lq", &self.lq)?;
        if !c.gamma.is_empty() && c.gamma.len() != self.atoms() {
            return Err(ConfigError::Invalid(format!(
                "lq.gamma: {} entries for {} Lévy atoms",
                c.gamma.len(),
                self.atoms()
            )));
        }
        let mut gamma = c.gamma.clone();
        gamma.resize(self.atoms(), 0.0);
        let p = LqProblem {
            x0: c.x0,
            sigma: c.sigma,
            gamma,
            grid: self.time_grid()?,
            levy: self.levy_model()?,
            constrained: c.constrained,
        };
        p.validate().map_err(|e| ConfigError::Invalid(format!("lq: {e}")))?;
        Ok((p, c.max_iter, c.tol))
    }

    pub fn cashflow_spec(&self) -> Result<(CashflowSpec, f64)> {
        let c = self.section("cashflow", &self.cashflow)?;
        self.per_atom("cashflow", "gamma0", &c.gamma0)?;
        let (b0, db0_dt) = exp_memory(c.memory.scale, c.memory.rate);
        let mut gamma0: Vec<TimeFn> = c.gamma0.iter().map(|g| g.to_fn()).collect();
        gamma0.resize_with(self.atoms(), || TimeFnConfig::default().to_fn());
        let spec = CashflowSpec {
            grid: self.time_grid()?,
            x0: c.x0,
            b0,
            db0_dt,
            sigma0: c.sigma0.to_fn(),
            gamma0,
            theta: c.theta,
            levy: self.levy_model()?,
        };
        spec.validate().map_err(|e| ConfigError::Invalid(format!("cashflow: {e}")))?;
        Ok((spec, c.tol))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_grid_is_an_error() {
        let e = ProblemConfig::from_str(r#"{"lq": {"x0": 1.0}}"#).unwrap_err();
        assert!(e.to_string().contains("grid"), "{e}");
    }

    #[test]
    fn unknown_keys_are_errors() {
        let e = ProblemConfig::from_str(r#"{"grid": {"T": 1, "M": 4}, "bsde": {"alpha": 1}}"#).unwrap_err();
        assert!(e.to_string().contains("alpha"), "{e}");
    }

    #[test]
    fn polynomial_time_functions() {
        let f = TimeFnConfig::Polynomial(vec![1.0, 2.0, 3.0]);
        assert_eq!(f.eval(2.0), 1.0 + 4.0 + 12.0);
        assert_eq!(TimeFnConfig::Constant(0.5).eval(9.0), 0.5);
    }

    #[test]
    fn jump_coefficients_must_match_atoms() {
        let c = ProblemConfig::from_str(
            r#"{"grid": {"T": 1, "M": 4}, "levy": [{"zeta": 1, "nu": 1}], "bsde": {"eta1": [0.1, 0.2]}}"#,
        )
        .unwrap();
        assert!(c.bsde_spec().unwrap_err().to_string().contains("eta1"));
    }
}

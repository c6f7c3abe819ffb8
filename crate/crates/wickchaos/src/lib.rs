//! Wiener–Itô chaos, Wick calculus and Malliavin calculus on a truncated
//! Hermite basis, with Monte Carlo evaluation and solvers for linear and
//! mean-field BSDEs, backward stochastic Volterra equations and stochastic
//! control problems driven by Brownian motion and compensated Poisson noise.

pub mod chaos;
pub mod error;

pub use error::{ChaosError, Result};
pub mod bsde;
pub mod bsvie;
pub mod cli;
pub mod config;
pub mod control;
pub mod malliavin;
pub mod mc;
pub mod selftest;
pub mod wick;

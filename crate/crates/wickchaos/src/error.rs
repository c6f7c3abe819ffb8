use thiserror::Error;

use crate::chaos::MultiIndex;

#[derive(Debug, Error)]
pub enum ChaosError {
    #[error("arithmetic overflow: {0}")]
    Overflow(String),
    #[error("order overflow: index {alpha:?} exceeds order cap {cap} (dropped mass {dropped})")]
    OrderOverflow { alpha: MultiIndex, cap: usize, dropped: f64 },
    #[error("variable overflow: index {alpha:?} uses variable beyond K = {k}")]
    VariableOverflow { alpha: MultiIndex, k: usize },
    #[error("truncation mismatch: {0}")]
    TruncationMismatch(String),
    #[error("basis insufficient: projection residual {residual:.3e} exceeds tolerance {tol:.3e} at order {order}")]
    BasisInsufficient { order: usize, residual: f64, tol: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("regression is rank deficient at time index {0}")]
    RankDeficient(usize),
    #[error("operator norm estimate {norm:.4} is not below 1 on the working interval")]
    IntervalTooLong { norm: f64 },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
}

pub type Result<T> = std::result::Result<T, ChaosError>;

//! Deterministic numeric kernels shared by the generator, the imputation
//! engine and the analysis models.
//!
//! Everything here is a pure function of its inputs and an [`RngStream`],
//! so the same `(seed, stream_id)` reproduces a computation bit-for-bit
//! regardless of thread scheduling.

mod linalg;
mod ols;
mod optim;
mod rng;

pub use linalg::{cholesky, mvn_sample, MvnSampler, SymMatrix};
pub use ols::{bayes_regression_draw, ols_fit, rank_profile, LsFit, RANK_TOLERANCE};
pub use optim::{maximize, MaximizeOptions, Maximum};
pub use rng::{stream_key, RngStream};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatError {
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("matrix is not positive definite (pivot {index} = {pivot:e})")]
    NotPositiveDefinite { index: usize, pivot: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("insufficient data: {n_used} rows for rank {rank}")]
    InsufficientData { n_used: usize, rank: usize },
    #[error("degenerate residual variance {0:e}")]
    DegenerateVariance(f64),
    #[error("objective is not finite at the starting point")]
    NonFiniteObjective,
}

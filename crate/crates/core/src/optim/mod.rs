//! Gradient methods on square and cross-entropy objectives, PL*
//! diagnostics and mini-batch scaling.
//!
//! Objectives are averages over the training set,
//! `L(w) = (1/n) Σ ℓ(f(w; xᵢ), yᵢ)` with `ℓ = ½(f − y)²` for the square
//! loss, so a mini-batch of the whole set reproduces full-batch GD exactly.

mod batch;
mod descent;
mod objective;

use thiserror::Error;

use crate::netmodels::NetError;
use crate::numlin::LinalgError;

pub use batch::{
    critical_batch_scan, spiked_gaussian_problem, BatchRow, BatchScalingReport, BatchScanConfig,
    Regime,
};
pub use descent::{
    gd, plstar_ratio, rate_fit, sgd, tangent_kernel_min_eig, DescentConfig, OptimTrace, RateFit,
    TraceRecord,
};
pub use objective::{LinearModel, Loss, Objective, ParamModel};

/// Loss above which a run is declared divergent.
pub const DIVERGENCE_LOSS: f64 = 1e12;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum OptimError {
    #[error("loss {loss:e} at iteration {iter} exceeds the divergence limit")]
    Diverged { iter: usize, loss: f64 },
    #[error("target loss not reached within {cap} iterations")]
    TargetUnreachable { cap: usize },
    #[error("loss must be positive inside the fit window (iteration {iter})")]
    NonPositiveLoss { iter: usize },
    #[error("invalid optimizer configuration: {0}")]
    InvalidConfig(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Net(#[from] NetError),
}

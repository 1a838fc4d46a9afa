//! Kernel machines and random Fourier feature regression.

mod machine;
mod rff;
mod sweep;

use thiserror::Error;

use crate::numlin::LinalgError;

pub use machine::{
    cross_kernel_matrix, fit_interpolating, kernel_eval, kernel_matrix, median_pairwise_distance,
    rkhs_norm_sq, KernelFamily, KernelMachine, KernelSpec, JITTER_LADDER,
};
pub use rff::{rff_features, rff_fit_minnorm, rff_frequencies, RffModel};
pub use sweep::{
    double_descent_sweep, CurvePoint, CurveRecord, MeanStderr, SweepConfig, SweepResult,
};

/// Training loss at or below which a fit counts as interpolating.
pub const INTERPOLATION_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum KernelError {
    #[error("bandwidth must be positive and finite (got {0})")]
    InvalidBandwidth(f64),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("interpolation residual {residual:.3e} exceeds tolerance even with jitter {jitter:e}")]
    IllConditioned { residual: f64, jitter: f64 },
    #[error("invalid sweep configuration: {0}")]
    InvalidSweep(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

//! Dense linear algebra: SPD solves, symmetric eigendecomposition, SVD,
//! pseudo-inverses and spectral norms.
//!
//! Everything here is written for desk-scale problems (a few thousand rows
//! at most) and favours accuracy over speed: the eigensolver is cyclic
//! Jacobi and the SVD is one-sided (Hestenes) Jacobi behind a Householder
//! QR. Complex systems are handled by callers through a real embedding.

mod cholesky;
mod eig;
mod matrix;
mod power;
mod regress;
mod svd;

use thiserror::Error;

pub use cholesky::{solve_spd, Cholesky};
pub use eig::{sym_eig, SymEig};
pub use matrix::{axpy, dist, dot, norm, sq_dist, sub, Matrix};
pub use power::{power_estimate, spectral_norm, sym_operator_norm, PowerEstimate};
pub use regress::{linear_fit, LinearFit};
pub use svd::{min_norm_solve, pinv, svd, Svd};

/// Default relative cutoff below which singular values are treated as zero.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Relative tolerance used when checking symmetry of inputs.
pub const SYMMETRY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum LinalgError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix is not square")]
    NotSquare,
    #[error("matrix is not symmetric")]
    NotSymmetric,
    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("iteration did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error("matrix has no entries")]
    Empty,
    #[error("non-finite entry")]
    NonFinite,
}

//! Feedforward networks with exact derivatives and linearity diagnostics.
//!
//! Gradients come from a hand-written reverse pass. The same pass is generic
//! over [`Scalar`], so running it on [`Dual`] numbers gives exact
//! Hessian-vector products (forward-over-reverse) and, column by column,
//! the dense Hessian.

mod dual;
mod linearity;
mod mlp;

use thiserror::Error;

use crate::numlin::LinalgError;

pub use dual::{Dual, Scalar};
pub use linearity::{linearity_scan, LinearityConfig, LinearityReport, LinearityRow, WrapTerms};
pub use mlp::{
    forward, grad, hessian, hvp, random_signs, tangent_kernel, Activation, LayerShape, MlpModel,
    ParamLayout, Params, DENSE_HESSIAN_CAP,
};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum NetError {
    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("dense Hessian with {params} parameters exceeds the cap of {cap}")]
    TooLarge { params: usize, cap: usize },
    #[error("invalid network configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

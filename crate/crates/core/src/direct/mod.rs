//! Training-free interpolating predictors.

mod neighbors;
mod simplicial;

use thiserror::Error;

pub use neighbors::{knn_predict, NeighborPredictor, Weighting};
pub use simplicial::{
    build_simplicial, simplex_disagreement_fraction, simplex_example_predict, simplicial_predict,
    SimplicialInterpolant,
};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum DirectError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("k = {k} is outside 1..={n}")]
    InvalidK { k: usize, n: usize },
    #[error("singular exponent must be positive (got {0})")]
    InvalidExponent(f64),
    #[error("query has dimension {found}, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("points are not in general position")]
    DegeneratePosition,
    #[error("triangulation supports dimension at most 3 (got {0})")]
    DimensionTooHigh(usize),
    #[error("query lies outside the convex hull of the training points")]
    OutsideHull,
    #[error("query lies outside the standard simplex")]
    OutsideSimplex,
}

/// Sign with ties going to `tie`.
pub(crate) fn sign_or(v: f64, tie: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        tie
    }
}

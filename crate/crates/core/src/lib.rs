//! Numerical laboratory for interpolation-regime learning.
//!
//! The crate is organised bottom-up:
//!
//! - [`numlin`]: dense linear algebra (Cholesky, Jacobi eigensolver, SVD,
//!   pseudo-inverse, spectral norms)
//! - [`datagen`]: synthetic distributions with analytic Bayes oracles, label
//!   corruption and IDX ingestion
//! - [`direct`]: training-free interpolators (k-NN, singular-kernel weighted
//!   NN, Delaunay simplicial interpolation)
//! - [`kernelmach`]: interpolating kernel machines, RKHS norms and random
//!   Fourier feature regression with double-descent sweeps
//! - [`netmodels`]: small feedforward networks with exact gradients,
//!   Hessians and tangent kernels
//! - [`optim`]: GD/SGD on square and cross-entropy objectives, PL*
//!   diagnostics and batch-size scaling
//! - [`lab`]: experiment runners producing CSV tables and plot scripts

pub mod datagen;
pub mod direct;
pub mod kernelmach;
pub mod lab;
pub mod netmodels;
pub mod numlin;
pub mod optim;
pub mod rng;

pub use numlin::Matrix;

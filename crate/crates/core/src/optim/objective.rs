use rayon::prelude::*;

use super::OptimError;
use crate::datagen::Dataset;
use crate::netmodels::{MlpModel, Scalar};
use crate::numlin::{axpy, dot, Matrix};

/// A model `f(w; x)` that is differentiable in its parameters.
pub trait ParamModel: Sync {
    fn num_params(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn value(&self, w: &[f64], x: &[f64]) -> f64;
    fn gradient(&self, w: &[f64], x: &[f64]) -> Vec<f64>;

    /// `out += c·∇f(w; x)`
    fn add_scaled_gradient(&self, w: &[f64], x: &[f64], c: f64, out: &mut [f64]) {
        axpy(c, &self.gradient(w, x), out);
    }
}

/// `f(w; x) = ⟨w, x⟩`. Kernel or random-feature regression is this model
/// applied to a feature matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LinearModel {
    pub dim: usize,
}

impl ParamModel for LinearModel {
    fn num_params(&self) -> usize {
        self.dim
    }

    fn input_dim(&self) -> usize {
        self.dim
    }

    fn value(&self, w: &[f64], x: &[f64]) -> f64 {
        dot(w, x)
    }

    fn gradient(&self, _w: &[f64], x: &[f64]) -> Vec<f64> {
        x.to_vec()
    }

    fn add_scaled_gradient(&self, _w: &[f64], x: &[f64], c: f64, out: &mut [f64]) {
        axpy(c, x, out);
    }
}

impl ParamModel for MlpModel {
    fn num_params(&self) -> usize {
        MlpModel::num_params(self)
    }

    fn input_dim(&self) -> usize {
        MlpModel::input_dim(self)
    }

    fn value(&self, w: &[f64], x: &[f64]) -> f64 {
        self.forward(w, x).expect("objective checks shapes")
    }

    fn gradient(&self, w: &[f64], x: &[f64]) -> Vec<f64> {
        self.grad(w, x).expect("objective checks shapes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loss {
    /// `½(f − y)²`
    Square,
    /// `log(1 + e^{−yf})` for labels `±1`.
    CrossEntropy,
}

impl Loss {
    pub fn value(self, f: f64, y: f64) -> f64 {
        match self {
            Loss::Square => 0.5 * (f - y) * (f - y),
            Loss::CrossEntropy => Scalar::softplus(-y * f),
        }
    }

    /// `∂ℓ/∂f`
    pub fn derivative(self, f: f64, y: f64) -> f64 {
        match self {
            Loss::Square => f - y,
            Loss::CrossEntropy => -y * Scalar::sigmoid(-y * f),
        }
    }
}

/// Average loss of a model over a dataset.
pub struct Objective<'a, M: ParamModel> {
    pub model: &'a M,
    pub data: &'a Dataset,
    pub loss: Loss,
}

impl<'a, M: ParamModel> Objective<'a, M> {
    pub fn new(model: &'a M, data: &'a Dataset, loss: Loss) -> Result<Self, OptimError> {
        if data.is_empty() {
            return Err(OptimError::InvalidConfig("dataset is empty".into()));
        }
        if data.dim() != model.input_dim() {
            return Err(OptimError::DimensionMismatch {
                expected: model.input_dim(),
                found: data.dim(),
            });
        }
        Ok(Self { model, data, loss })
    }

    pub fn square(model: &'a M, data: &'a Dataset) -> Result<Self, OptimError> {
        Self::new(model, data, Loss::Square)
    }

    pub fn n(&self) -> usize {
        self.data.len()
    }

    pub fn num_params(&self) -> usize {
        self.model.num_params()
    }

    pub(crate) fn check_params(&self, w: &[f64]) -> Result<(), OptimError> {
        if w.len() != self.num_params() {
            return Err(OptimError::DimensionMismatch {
                expected: self.num_params(),
                found: w.len(),
            });
        }
        Ok(())
    }

    pub fn predictions(&self, w: &[f64]) -> Vec<f64> {
        let rows: Vec<&[f64]> = self.data.x.row_iter().collect();
        rows.par_iter().map(|x| self.model.value(w, x)).collect()
    }

    pub fn loss_value(&self, w: &[f64]) -> f64 {
        let f = self.predictions(w);
        f.iter()
            .zip(&self.data.y)
            .map(|(&fi, &yi)| self.loss.value(fi, yi))
            .sum::<f64>()
            / self.n() as f64
    }

    /// Mean loss over `batch` and its gradient. Indices are summed in the
    /// order given, so sorted batches give reproducible sums.
    pub fn batch_loss_grad(&self, w: &[f64], batch: &[usize]) -> (f64, Vec<f64>) {
        let f: Vec<f64> = batch
            .par_iter()
            .map(|&i| self.model.value(w, self.data.x.row(i)))
            .collect();
        let inv = 1.0 / batch.len() as f64;
        let mut g = vec![0.0; w.len()];
        let mut total = 0.0;
        for (&i, &fi) in batch.iter().zip(&f) {
            let yi = self.data.y[i];
            total += self.loss.value(fi, yi);
            self.model.add_scaled_gradient(
                w,
                self.data.x.row(i),
                inv * self.loss.derivative(fi, yi),
                &mut g,
            );
        }
        (total * inv, g)
    }

    pub fn loss_grad(&self, w: &[f64]) -> (f64, Vec<f64>) {
        let all: Vec<usize> = (0..self.n()).collect();
        self.batch_loss_grad(w, &all)
    }

    /// Rows `∇f(w; xᵢ)ᵀ` stacked into an `n × M` matrix.
    pub fn jacobian(&self, w: &[f64]) -> Matrix {
        let rows: Vec<&[f64]> = self.data.x.row_iter().collect();
        let grads: Vec<Vec<f64>> = rows.par_iter().map(|x| self.model.gradient(w, x)).collect();
        Matrix::from_rows(&grads)
    }
}

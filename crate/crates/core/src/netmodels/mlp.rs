use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::{Dual, NetError, Scalar};
use crate::numlin::{dot, Matrix};
use crate::rng::{substream, tag};

/// Largest parameter count for which a dense Hessian is formed.
pub const DENSE_HESSIAN_CAP: usize = 3000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Tanh,
    Softplus,
}

impl Activation {
    pub fn apply<S: Scalar>(self, z: S) -> S {
        match self {
            Activation::Identity => z,
            Activation::Tanh => z.tanh(),
            Activation::Softplus => z.softplus(),
        }
    }

    pub fn derivative<S: Scalar>(self, z: S) -> S {
        match self {
            Activation::Identity => S::cst(1.0),
            Activation::Tanh => {
                let t = z.tanh();
                S::cst(1.0) - t * t
            }
            Activation::Softplus => z.sigmoid(),
        }
    }

    pub fn second_derivative(self, z: f64) -> f64 {
        match self {
            Activation::Identity => 0.0,
            Activation::Tanh => {
                let t = z.tanh();
                -2.0 * t * (1.0 - t * t)
            }
            Activation::Softplus => {
                let s = Scalar::sigmoid(z);
                s * (1.0 - s)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerShape {
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl LayerShape {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Where each layer lives inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamLayout {
    pub layers: Vec<LayerShape>,
    /// Offset of the output weights, when they are trainable.
    pub output_offset: Option<usize>,
    pub total: usize,
}

/// Structured view of a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub layers: Vec<Matrix>,
    pub output: Option<Vec<f64>>,
}

impl ParamLayout {
    pub fn unflatten(&self, w: &[f64]) -> Result<Params, NetError> {
        if w.len() != self.total {
            return Err(NetError::ShapeMismatch {
                expected: self.total,
                found: w.len(),
            });
        }
        let layers = self
            .layers
            .iter()
            .map(|s| Matrix::new(s.rows, s.cols, w[s.offset..s.offset + s.len()].to_vec()))
            .collect::<Result<Vec<_>, _>>()?;
        let output = self.output_offset.map(|o| w[o..self.total].to_vec());
        Ok(Params { layers, output })
    }

    pub fn flatten(&self, p: &Params) -> Result<Vec<f64>, NetError> {
        let mut w = Vec::with_capacity(self.total);
        if p.layers.len() != self.layers.len() {
            return Err(NetError::ShapeMismatch {
                expected: self.layers.len(),
                found: p.layers.len(),
            });
        }
        for (m, s) in p.layers.iter().zip(&self.layers) {
            if m.shape() != (s.rows, s.cols) {
                return Err(NetError::ShapeMismatch {
                    expected: s.len(),
                    found: m.rows() * m.cols(),
                });
            }
            w.extend_from_slice(m.as_slice());
        }
        match (&p.output, self.output_offset) {
            (Some(v), Some(_)) => w.extend_from_slice(v),
            (None, None) => {}
            _ => {
                return Err(NetError::InvalidConfig(
                    "output layer trainability differs from layout".into(),
                ))
            }
        }
        if w.len() != self.total {
            return Err(NetError::ShapeMismatch {
                expected: self.total,
                found: w.len(),
            });
        }
        Ok(w)
    }
}

/// Bias-free feedforward network `f(w,x) = c·vᵀα(W⁽ᴸ⁾ ⋯ α(W⁽¹⁾x))` with
/// `c = 1/√m` (last hidden width) when `output_scale` is set, optionally
/// wrapped as `g = φ(f)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    input_dim: usize,
    hidden: Vec<usize>,
    activation: Activation,
    output_scale: bool,
    /// Scale pre-activations of layers after the first by `1/√fan_in`.
    hidden_scaling: bool,
    /// Fixed output weights; `None` means they are trainable parameters.
    fixed_output: Option<Vec<f64>>,
    output_wrap: Option<Activation>,
}

impl MlpModel {
    pub fn new(
        input_dim: usize,
        hidden: Vec<usize>,
        activation: Activation,
    ) -> Result<Self, NetError> {
        if input_dim == 0 || hidden.is_empty() || hidden.contains(&0) {
            return Err(NetError::InvalidConfig(
                "input and hidden widths must be positive".into(),
            ));
        }
        Ok(Self {
            input_dim,
            hidden,
            activation,
            output_scale: true,
            hidden_scaling: true,
            fixed_output: None,
            output_wrap: None,
        })
    }

    /// `f(w,x) = (1/√m) Σ vᵢ α(⟨wᵢ, x⟩)` with a frozen output layer `v`.
    pub fn two_layer_fixed(
        input_dim: usize,
        activation: Activation,
        v: Vec<f64>,
    ) -> Result<Self, NetError> {
        Self::new(input_dim, vec![v.len()], activation)?.with_fixed_output(v)
    }

    pub fn with_fixed_output(mut self, v: Vec<f64>) -> Result<Self, NetError> {
        let m = *self.hidden.last().expect("nonempty");
        if v.len() != m {
            return Err(NetError::ShapeMismatch {
                expected: m,
                found: v.len(),
            });
        }
        self.fixed_output = Some(v);
        Ok(self)
    }

    pub fn with_output_wrap(mut self, wrap: Option<Activation>) -> Self {
        self.output_wrap = wrap;
        self
    }

    pub fn with_output_scale(mut self, on: bool) -> Self {
        self.output_scale = on;
        self
    }

    pub fn with_hidden_scaling(mut self, on: bool) -> Self {
        self.hidden_scaling = on;
        self
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden(&self) -> &[usize] {
        &self.hidden
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn output_wrap(&self) -> Option<Activation> {
        self.output_wrap
    }

    pub fn fixed_output(&self) -> Option<&[f64]> {
        self.fixed_output.as_deref()
    }

    pub fn layout(&self) -> ParamLayout {
        let mut layers = Vec::with_capacity(self.hidden.len());
        let mut offset = 0;
        let mut fan_in = self.input_dim;
        for &h in &self.hidden {
            layers.push(LayerShape {
                rows: h,
                cols: fan_in,
                offset,
            });
            offset += h * fan_in;
            fan_in = h;
        }
        let output_offset = self.fixed_output.is_none().then_some(offset);
        if output_offset.is_some() {
            offset += fan_in;
        }
        ParamLayout {
            layers,
            output_offset,
            total: offset,
        }
    }

    pub fn num_params(&self) -> usize {
        self.layout().total
    }

    /// Parameters drawn iid standard normal from the `INIT` substream.
    pub fn init_params(&self, seed: u64) -> Vec<f64> {
        let mut rng = substream(seed, &[tag::INIT, self.num_params() as u64]);
        (0..self.num_params())
            .map(|_| StandardNormal.sample(&mut rng))
            .collect()
    }

    pub fn without_wrap(&self) -> Self {
        self.clone().with_output_wrap(None)
    }

    fn layer_scale(&self, l: usize, fan_in: usize) -> f64 {
        if l > 0 && self.hidden_scaling {
            1.0 / (fan_in as f64).sqrt()
        } else {
            1.0
        }
    }

    fn output_factor(&self) -> f64 {
        if self.output_scale {
            1.0 / (*self.hidden.last().expect("nonempty") as f64).sqrt()
        } else {
            1.0
        }
    }

    fn check(&self, w_len: usize, x_len: usize) -> Result<(), NetError> {
        let total = self.num_params();
        if w_len != total {
            return Err(NetError::ShapeMismatch {
                expected: total,
                found: w_len,
            });
        }
        if x_len != self.input_dim {
            return Err(NetError::ShapeMismatch {
                expected: self.input_dim,
                found: x_len,
            });
        }
        Ok(())
    }

    /// Output and its gradient in one forward and one reverse pass.
    pub(crate) fn value_grad_generic<S: Scalar>(&self, w: &[S], x: &[f64]) -> (S, Vec<S>) {
        let layout = self.layout();
        let mut acts: Vec<Vec<S>> = vec![x.iter().map(|&v| S::cst(v)).collect()];
        let mut pre: Vec<Vec<S>> = Vec::with_capacity(layout.layers.len());
        for (l, s) in layout.layers.iter().enumerate() {
            let wl = &w[s.offset..s.offset + s.len()];
            let scale = S::cst(self.layer_scale(l, s.cols));
            let prev = acts.last().expect("input present");
            let z: Vec<S> = (0..s.rows)
                .map(|i| {
                    let row = &wl[i * s.cols..(i + 1) * s.cols];
                    let mut acc = S::cst(0.0);
                    for (wij, aj) in row.iter().zip(prev) {
                        acc += *wij * *aj;
                    }
                    acc * scale
                })
                .collect();
            acts.push(z.iter().map(|&zi| self.activation.apply(zi)).collect());
            pre.push(z);
        }

        let last = acts.last().expect("at least one hidden layer");
        let v: Vec<S> = match (&self.fixed_output, layout.output_offset) {
            (Some(v), _) => v.iter().map(|&vi| S::cst(vi)).collect(),
            (None, Some(o)) => w[o..layout.total].to_vec(),
            (None, None) => {
                unreachable!("layout always has trainable output without fixed weights")
            }
        };
        let c = S::cst(self.output_factor());
        let mut f = S::cst(0.0);
        for (vi, ai) in v.iter().zip(last) {
            f += *vi * *ai;
        }
        f = f * c;
        let (g, dg) = match self.output_wrap {
            Some(phi) => (phi.apply(f), phi.derivative(f)),
            None => (f, S::cst(1.0)),
        };

        let mut grad = vec![S::cst(0.0); layout.total];
        let top = dg * c;
        if let Some(o) = layout.output_offset {
            for (gi, ai) in grad[o..].iter_mut().zip(last) {
                *gi = top * *ai;
            }
        }
        let mut delta: Vec<S> = v.iter().map(|&vi| top * vi).collect();
        for l in (0..layout.layers.len()).rev() {
            let s = layout.layers[l];
            let scale = S::cst(self.layer_scale(l, s.cols));
            let dz: Vec<S> = delta
                .iter()
                .zip(&pre[l])
                .map(|(&d, &z)| d * self.activation.derivative(z) * scale)
                .collect();
            let input = &acts[l];
            for (i, &dzi) in dz.iter().enumerate() {
                let g_row = &mut grad[s.offset + i * s.cols..s.offset + (i + 1) * s.cols];
                for (gij, &aj) in g_row.iter_mut().zip(input) {
                    *gij = dzi * aj;
                }
            }
            if l > 0 {
                let wl = &w[s.offset..s.offset + s.len()];
                let mut next = vec![S::cst(0.0); s.cols];
                for (i, &dzi) in dz.iter().enumerate() {
                    for (nj, &wij) in next.iter_mut().zip(&wl[i * s.cols..(i + 1) * s.cols]) {
                        *nj += wij * dzi;
                    }
                }
                delta = next;
            }
        }
        (g, grad)
    }

    pub fn forward(&self, w: &[f64], x: &[f64]) -> Result<f64, NetError> {
        self.check(w.len(), x.len())?;
        Ok(self.value_grad_generic(w, x).0)
    }

    pub fn value_and_grad(&self, w: &[f64], x: &[f64]) -> Result<(f64, Vec<f64>), NetError> {
        self.check(w.len(), x.len())?;
        Ok(self.value_grad_generic(w, x))
    }

    pub fn grad(&self, w: &[f64], x: &[f64]) -> Result<Vec<f64>, NetError> {
        Ok(self.value_and_grad(w, x)?.1)
    }

    /// Exact Hessian-vector product `H(w)·u` (forward-over-reverse).
    pub fn hvp(&self, w: &[f64], x: &[f64], u: &[f64]) -> Result<Vec<f64>, NetError> {
        self.check(w.len(), x.len())?;
        if u.len() != w.len() {
            return Err(NetError::ShapeMismatch {
                expected: w.len(),
                found: u.len(),
            });
        }
        let wd: Vec<Dual> = w.iter().zip(u).map(|(&a, &b)| Dual::new(a, b)).collect();
        Ok(self
            .value_grad_generic(&wd, x)
            .1
            .into_iter()
            .map(|d| d.eps)
            .collect())
    }

    /// Dense, exactly symmetric Hessian from one HVP per coordinate.
    pub fn hessian(&self, w: &[f64], x: &[f64]) -> Result<Matrix, NetError> {
        self.check(w.len(), x.len())?;
        let m = w.len();
        if m > DENSE_HESSIAN_CAP {
            return Err(NetError::TooLarge {
                params: m,
                cap: DENSE_HESSIAN_CAP,
            });
        }
        let cols: Vec<Vec<f64>> = (0..m)
            .into_par_iter()
            .map(|j| {
                let mut e = vec![0.0; m];
                e[j] = 1.0;
                self.hvp(w, x, &e).expect("shapes checked")
            })
            .collect();
        let mut h = Matrix::from_fn(m, m, |i, j| cols[j][i]);
        for i in 0..m {
            for j in i + 1..m {
                let s = 0.5 * (h[(i, j)] + h[(j, i)]);
                h[(i, j)] = s;
                h[(j, i)] = s;
            }
        }
        Ok(h)
    }
}

pub fn forward(model: &MlpModel, w: &[f64], x: &[f64]) -> Result<f64, NetError> {
    model.forward(w, x)
}

pub fn grad(model: &MlpModel, w: &[f64], x: &[f64]) -> Result<Vec<f64>, NetError> {
    model.grad(w, x)
}

pub fn hvp(model: &MlpModel, w: &[f64], x: &[f64], u: &[f64]) -> Result<Vec<f64>, NetError> {
    model.hvp(w, x, u)
}

pub fn hessian(model: &MlpModel, w: &[f64], x: &[f64]) -> Result<Matrix, NetError> {
    model.hessian(w, x)
}

/// `K[i][j] = ⟨∇f(w; xᵢ), ∇f(w; xⱼ)⟩` over the rows of `x`.
pub fn tangent_kernel(model: &MlpModel, w: &[f64], x: &Matrix) -> Result<Matrix, NetError> {
    let grads = x
        .row_iter()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|r| model.grad(w, r))
        .collect::<Result<Vec<_>, _>>()?;
    let n = grads.len();
    let mut k = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = dot(&grads[i], &grads[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(k)
}

/// `m` iid signs `±1` from the `INIT` substream.
pub fn random_signs(m: usize, seed: u64) -> Vec<f64> {
    let mut rng = substream(seed, &[tag::INIT, u64::MAX, m as u64]);
    (0..m)
        .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numlin::{spectral_norm, sym_eig};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn random_vec(n: usize, seed: u64, scale: f64) -> Vec<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| scale * rng.random_range(-1.0..1.0))
            .collect()
    }

    /// Independent evaluator: explicit loops, no shared code with the model.
    fn straight_line(
        w: &[f64],
        x: &[f64],
        widths: &[usize],
        act: fn(f64) -> f64,
        wrap: Option<fn(f64) -> f64>,
    ) -> f64 {
        let mut a = x.to_vec();
        let mut off = 0;
        for (l, &h) in widths.iter().enumerate() {
            let fan = a.len();
            let s = if l == 0 {
                1.0
            } else {
                1.0 / (fan as f64).sqrt()
            };
            let mut next = vec![0.0; h];
            for i in 0..h {
                let mut z = 0.0;
                for j in 0..fan {
                    z += w[off + i * fan + j] * a[j];
                }
                next[i] = act(s * z);
            }
            off += h * fan;
            a = next;
        }
        let m = a.len();
        let f: f64 = (0..m).map(|i| w[off + i] * a[i]).sum::<f64>() / (m as f64).sqrt();
        wrap.map_or(f, |g| g(f))
    }

    fn softplus(z: f64) -> f64 {
        (1.0 + z.exp()).ln()
    }

    fn fd_grad(model: &MlpModel, w: &[f64], x: &[f64]) -> Vec<f64> {
        let h = 1e-5;
        (0..w.len())
            .map(|k| {
                let mut p = w.to_vec();
                let mut q = w.to_vec();
                p[k] += h;
                q[k] -= h;
                (model.forward(&p, x).unwrap() - model.forward(&q, x).unwrap()) / (2.0 * h)
            })
            .collect()
    }

    fn assert_rel(a: f64, b: f64, tol: f64, scale: f64) {
        assert!(
            (a - b).abs() <= tol * a.abs().max(b.abs()).max(scale),
            "{a} vs {b}"
        );
    }

    #[test]
    fn identity_activation_collapses_to_linear_map() {
        let model = MlpModel::new(3, vec![4], Activation::Identity).unwrap();
        let w = random_vec(model.num_params(), 1, 1.0);
        let x = [0.2, -0.7, 1.1];
        let p = model.layout().unflatten(&w).unwrap();
        let wx = p.layers[0].matvec(&x).unwrap();
        let expected = dot(p.output.as_ref().unwrap(), &wx) / 2.0;
        assert!((model.forward(&w, &x).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn zero_weights_give_zero() {
        let model = MlpModel::new(2, vec![5, 3], Activation::Tanh).unwrap();
        assert_eq!(
            model
                .forward(&vec![0.0; model.num_params()], &[1.0, 2.0])
                .unwrap(),
            0.0
        );
    }

    #[test]
    fn matches_straight_line_evaluator() {
        for (act, f) in [
            (Activation::Tanh, f64::tanh as fn(f64) -> f64),
            (Activation::Softplus, softplus),
        ] {
            let model = MlpModel::new(3, vec![5, 4], act).unwrap();
            let w = random_vec(model.num_params(), 7, 1.0);
            let x = [0.5, -0.3, 0.9];
            let a = model.forward(&w, &x).unwrap();
            let b = straight_line(&w, &x, &[5, 4], f, None);
            assert!((a - b).abs() < 1e-13);
            let wrapped = model.clone().with_output_wrap(Some(Activation::Softplus));
            let c = straight_line(&w, &x, &[5, 4], f, Some(softplus));
            assert!((wrapped.forward(&w, &x).unwrap() - c).abs() < 1e-13);
        }
    }

    #[test]
    fn linear_model_gradient_is_input() {
        // one hidden unit, identity, fixed output weight √1 = 1: f = ⟨w, x⟩
        let model = MlpModel::two_layer_fixed(4, Activation::Identity, vec![1.0]).unwrap();
        let x = [0.3, -1.0, 2.0, 0.5];
        let w = random_vec(4, 3, 1.0);
        assert_eq!(model.grad(&w, &x).unwrap(), x.to_vec());
    }

    #[test]
    fn two_layer_closed_forms() {
        let m = 50;
        let v = random_signs(m, 4);
        let model = MlpModel::two_layer_fixed(1, Activation::Tanh, v.clone()).unwrap();
        let w = model.init_params(4);
        let x = [0.8];
        let sm = (m as f64).sqrt();
        let g = model.grad(&w, &x).unwrap();
        let h = model.hessian(&w, &x).unwrap();
        for i in 0..m {
            let t = (w[i] * x[0]).tanh();
            assert!((g[i] - v[i] * x[0] * (1.0 - t * t) / sm).abs() < 1e-15);
            let d2 = Activation::Tanh.second_derivative(w[i] * x[0]);
            assert!((h[(i, i)] - v[i] * x[0] * x[0] * d2 / sm).abs() < 1e-14);
            for j in 0..m {
                if i != j {
                    assert!(h[(i, j)].abs() <= 1e-12);
                }
            }
        }
        // ‖∇f‖ = √((1/m) Σ x² α′(wᵢx)²)
        let closed = ((0..m)
            .map(|i| x[0] * x[0] * (1.0 - (w[i] * x[0]).tanh().powi(2)).powi(2))
            .sum::<f64>()
            / m as f64)
            .sqrt();
        assert!((crate::numlin::norm(&g) - closed).abs() < 1e-14);
        // ‖H‖ = (x²/√m) max|α″(wᵢx)|
        let hn = x[0] * x[0] / sm
            * (0..m)
                .map(|i| Activation::Tanh.second_derivative(w[i] * x[0]).abs())
                .fold(0.0, f64::max);
        assert!((spectral_norm(&h).unwrap() - hn).abs() <= 1e-8 * hn);
    }

    #[test]
    fn tanh_hessian_vanishes_at_zero() {
        let model = MlpModel::two_layer_fixed(1, Activation::Tanh, random_signs(16, 1)).unwrap();
        let h = model.hessian(&[0.0; 16], &[1.3]).unwrap();
        assert_eq!(h.max_abs(), 0.0);
    }

    #[test]
    fn hessian_cap() {
        let model = MlpModel::new(1, vec![DENSE_HESSIAN_CAP + 1], Activation::Tanh)
            .unwrap()
            .with_fixed_output(vec![1.0; DENSE_HESSIAN_CAP + 1])
            .unwrap();
        let w = vec![0.0; model.num_params()];
        assert!(matches!(
            model.hessian(&w, &[1.0]),
            Err(NetError::TooLarge { .. })
        ));
    }

    #[test]
    fn layout_round_trip() {
        let model = MlpModel::new(3, vec![4, 2], Activation::Tanh).unwrap();
        let layout = model.layout();
        assert_eq!(layout.total, 3 * 4 + 4 * 2 + 2);
        let w = random_vec(layout.total, 9, 1.0);
        let p = layout.unflatten(&w).unwrap();
        assert_eq!(p.layers[1].shape(), (2, 4));
        assert_eq!(layout.flatten(&p).unwrap(), w);
        assert!(layout.unflatten(&w[1..]).is_err());
    }

    #[test]
    fn shape_errors() {
        let model = MlpModel::new(2, vec![3], Activation::Tanh).unwrap();
        let w = vec![0.0; model.num_params()];
        assert!(matches!(
            model.forward(&w, &[1.0]),
            Err(NetError::ShapeMismatch { .. })
        ));
        assert!(matches!(
            model.forward(&w[1..], &[1.0, 2.0]),
            Err(NetError::ShapeMismatch { .. })
        ));
        assert!(MlpModel::new(2, vec![], Activation::Tanh).is_err());
    }

    #[test]
    fn tangent_kernel_identities() {
        // two-layer identity net: K(x, z) = xz·(1/m)Σvᵢ² = xz
        let model =
            MlpModel::two_layer_fixed(1, Activation::Identity, random_signs(12, 2)).unwrap();
        let x = Matrix::from_rows(&[[0.5], [-1.0], [2.0]]);
        for seed in 0..3 {
            let w = model.init_params(seed);
            let k = tangent_kernel(&model, &w, &x).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    assert!((k[(i, j)] - x[(i, 0)] * x[(j, 0)]).abs() < 1e-14);
                }
            }
        }
        let deep = MlpModel::new(2, vec![6, 5], Activation::Softplus).unwrap();
        let w = deep.init_params(3);
        let xs = Matrix::from_rows(&[[0.1, 0.2], [1.0, -1.0], [0.0, 0.7], [2.0, 0.3]]);
        let k = tangent_kernel(&deep, &w, &xs).unwrap();
        for i in 0..4 {
            let g = deep.grad(&w, xs.row(i)).unwrap();
            assert!((k[(i, i)] - dot(&g, &g)).abs() < 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(20))]
        #[test]
        fn gradient_matches_finite_differences(seed in 0u64..5000, arch in 0usize..4) {
            let (hidden, act, wrap) = [
                (vec![4], Activation::Tanh, None),
                (vec![3, 4], Activation::Softplus, None),
                (vec![5, 3], Activation::Tanh, Some(Activation::Softplus)),
                (vec![2, 3, 2], Activation::Tanh, None),
            ][arch].clone();
            let model = MlpModel::new(3, hidden, act).unwrap().with_output_wrap(wrap);
            let w = random_vec(model.num_params(), seed, 1.0);
            let x = random_vec(3, seed ^ 0xfeed, 1.0);
            let g = model.grad(&w, &x).unwrap();
            let fd = fd_grad(&model, &w, &x);
            let scale = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for (a, b) in g.iter().zip(&fd) {
                prop_assert!((a - b).abs() <= 1e-6 * a.abs().max(scale * 1e-2).max(1e-3), "{} vs {}", a, b);
            }
        }

        #[test]
        fn hessian_matches_finite_differences_of_gradient(seed in 0u64..5000, arch in 0usize..3) {
            let (hidden, act, wrap) = [
                (vec![4], Activation::Tanh, None),
                (vec![3, 3], Activation::Softplus, None),
                (vec![3, 2], Activation::Tanh, Some(Activation::Softplus)),
            ][arch].clone();
            let model = MlpModel::new(2, hidden, act).unwrap().with_output_wrap(wrap);
            let w = random_vec(model.num_params(), seed, 1.0);
            let x = random_vec(2, seed ^ 0xbeef, 1.0);
            let h = model.hessian(&w, &x).unwrap();
            let scale = h.max_abs().max(1e-3);
            let step = 1e-5;
            for k in 0..w.len() {
                let mut p = w.clone();
                let mut q = w.clone();
                p[k] += step;
                q[k] -= step;
                let gp = model.grad(&p, &x).unwrap();
                let gq = model.grad(&q, &x).unwrap();
                for i in 0..w.len() {
                    let fd = (gp[i] - gq[i]) / (2.0 * step);
                    assert_rel(h[(i, k)], fd, 1e-5, scale);
                }
            }
            prop_assert!(h.is_symmetric(0.0));
        }

        #[test]
        fn tangent_kernel_is_psd(seed in 0u64..5000, n in 2usize..8) {
            let model = MlpModel::new(2, vec![6, 4], Activation::Tanh).unwrap();
            let w = model.init_params(seed);
            let xs = Matrix::new(n, 2, random_vec(2 * n, seed + 1, 2.0)).unwrap();
            let e = sym_eig(&tangent_kernel(&model, &w, &xs).unwrap()).unwrap();
            prop_assert!(e.min() >= -1e-8 * e.max().max(1e-300));
        }
    }
}

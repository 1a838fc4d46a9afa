use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::{random_signs, tangent_kernel, Activation, MlpModel, NetError};
use crate::numlin::{linear_fit, norm, power_estimate, sym_eig, Matrix};
use crate::rng::{substream, tag};

/// Width scan of Hessian norm, gradient norm and tangent-kernel drift over
/// a parameter ball around a random initialization.
#[derive(Debug, Clone)]
pub struct LinearityConfig {
    /// Last-hidden-layer widths, ascending.
    pub widths: Vec<usize>,
    /// Number of hidden layers, all of the scanned width.
    pub depth: usize,
    pub activation: Activation,
    pub output_wrap: Option<Activation>,
    /// Input at which `‖H‖` and `‖∇f‖` are measured.
    pub input: Vec<f64>,
    /// Inputs over which the tangent kernel is formed.
    pub kernel_inputs: Matrix,
    pub radius: f64,
    pub probes: usize,
    pub seed: u64,
    /// Parameter count up to which `‖H‖` comes from a dense eigensolve;
    /// larger models use power iteration on Hessian-vector products.
    pub dense_cap: usize,
    pub power_iters: usize,
    /// Relative change in the power-iteration estimate treated as converged.
    pub power_tol: f64,
}

impl Default for LinearityConfig {
    fn default() -> Self {
        Self {
            widths: (6..=12).map(|k| 1usize << k).collect(),
            depth: 1,
            activation: Activation::Tanh,
            output_wrap: None,
            input: vec![1.0],
            kernel_inputs: Matrix::from_fn(8, 1, |i, _| -1.0 + 2.0 * i as f64 / 7.0),
            radius: 1.0,
            probes: 32,
            seed: 0,
            dense_cap: 256,
            power_iters: 2000,
            power_tol: 1e-8,
        }
    }
}

impl LinearityConfig {
    pub fn validate(&self) -> Result<(), NetError> {
        let bad = |m: &str| Err(NetError::InvalidConfig(m.into()));
        if self.widths.is_empty()
            || self.widths[0] == 0
            || self.widths.windows(2).any(|w| w[0] >= w[1])
        {
            return bad("widths must be positive and strictly ascending");
        }
        if self.depth == 0 {
            return bad("depth must be at least 1");
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return bad("ball radius must be positive");
        }
        if self.probes == 0 {
            return bad("need at least one probe");
        }
        if self.input.is_empty()
            || self.kernel_inputs.cols() != self.input.len()
            || self.kernel_inputs.rows() == 0
        {
            return bad("input and kernel inputs must share a positive dimension");
        }
        Ok(())
    }

    /// Network of the configured family at hidden width `m`, with output
    /// weights fixed to random signs.
    pub fn model(&self, m: usize) -> Result<MlpModel, NetError> {
        Ok(
            MlpModel::new(self.input.len(), vec![m; self.depth], self.activation)?
                .with_fixed_output(random_signs(m, self.seed))?
                .with_output_wrap(self.output_wrap),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearityRow {
    pub m: usize,
    pub params: usize,
    /// `‖∇f(w₀)‖` at the scan input.
    pub grad_norm: f64,
    /// Max over ball probes of `‖H(w)‖`.
    pub hess_norm_max: f64,
    /// Max over ball probes of `‖K(w) − K(w₀)‖ / ‖K(w₀)‖`.
    pub ntk_drift: f64,
    /// Whether every power iteration met its tolerance.
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearityReport {
    pub rows: Vec<LinearityRow>,
    /// Log-log slopes against `m`.
    pub grad_slope: f64,
    pub hess_slope: f64,
    pub drift_slope: f64,
}

impl LinearityReport {
    pub const CSV_HEADER: &'static str = "m,grad_norm,hess_norm_max,ntk_drift";

    pub fn widths(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.m).collect()
    }

    /// Data rows followed by a `slope,...` footer in the same column order.
    pub fn csv_lines(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .rows
            .iter()
            .map(|r| {
                format!(
                    "{},{:.9e},{:.9e},{:.9e}",
                    r.m, r.grad_norm, r.hess_norm_max, r.ntk_drift
                )
            })
            .collect();
        out.push(format!(
            "slope,{:.6},{:.6},{:.6}",
            self.grad_slope, self.hess_slope, self.drift_slope
        ));
        out
    }
}

pub fn linearity_scan(cfg: &LinearityConfig) -> Result<LinearityReport, NetError> {
    cfg.validate()?;
    let rows = cfg
        .widths
        .par_iter()
        .map(|&m| scan_width(cfg, m))
        .collect::<Result<Vec<_>, _>>()?;
    let logm: Vec<f64> = rows.iter().map(|r| (r.m as f64).ln()).collect();
    let slope = |f: fn(&LinearityRow) -> f64| -> f64 {
        let ys: Vec<f64> = rows
            .iter()
            .map(|r| f(r).max(f64::MIN_POSITIVE).ln())
            .collect();
        linear_fit(&logm, &ys).map_or(f64::NAN, |fit| fit.slope)
    };
    Ok(LinearityReport {
        grad_slope: slope(|r| r.grad_norm),
        hess_slope: slope(|r| r.hess_norm_max),
        drift_slope: slope(|r| r.ntk_drift),
        rows,
    })
}

fn scan_width(cfg: &LinearityConfig, m: usize) -> Result<LinearityRow, NetError> {
    let model = cfg.model(m)?;
    let dim = model.num_params();
    let w0 = model.init_params(cfg.seed);
    let grad_norm = norm(&model.grad(&w0, &cfg.input)?);
    let k0 = tangent_kernel(&model, &w0, &cfg.kernel_inputs)?;
    let k0_norm = sym_norm(&k0)?;

    let probes = (0..cfg.probes)
        .into_par_iter()
        .map(|p| {
            let mut rng = substream(cfg.seed, &[tag::PROBE, m as u64, p as u64]);
            let mut dir: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let nd = norm(&dir);
            dir.iter_mut().for_each(|d| *d *= cfg.radius / nd);
            let w: Vec<f64> = w0.iter().zip(&dir).map(|(a, b)| a + b).collect();
            let (h, ok) = hessian_norm(
                &model,
                &w,
                &cfg.input,
                cfg.dense_cap,
                cfg.power_iters,
                cfg.power_tol,
            )?;
            let k = tangent_kernel(&model, &w, &cfg.kernel_inputs)?;
            let drift = sym_norm(&k.sub(&k0)?)? / k0_norm;
            Ok((h, drift, ok))
        })
        .collect::<Result<Vec<_>, NetError>>()?;

    Ok(LinearityRow {
        m,
        params: dim,
        grad_norm,
        hess_norm_max: probes.iter().map(|p| p.0).fold(0.0, f64::max),
        ntk_drift: probes.iter().map(|p| p.1).fold(0.0, f64::max),
        converged: probes.iter().all(|p| p.2),
    })
}

/// `‖H(w)‖` at input `x` and whether the estimate converged.
pub(crate) fn hessian_norm(
    model: &MlpModel,
    w: &[f64],
    x: &[f64],
    dense_cap: usize,
    power_iters: usize,
    power_tol: f64,
) -> Result<(f64, bool), NetError> {
    if w.len() <= dense_cap {
        return Ok((sym_norm(&model.hessian(w, x)?)?, true));
    }
    let est = power_estimate(w.len(), power_iters, power_tol, |u| {
        model.hvp(w, x, u).expect("shapes checked")
    })?;
    Ok((est.value, est.converged))
}

fn sym_norm(a: &Matrix) -> Result<f64, NetError> {
    let e = sym_eig(a)?;
    Ok(e.max().abs().max(e.min().abs()))
}

/// Pieces of `H_g = φ′(f)·H_f + φ″(f)·∇f∇fᵀ` for `g = φ(f)`.
#[derive(Debug, Clone)]
pub struct WrapTerms {
    pub hess_wrapped: Matrix,
    pub hess_inner: Matrix,
    pub grad_inner: Vec<f64>,
    pub inner_value: f64,
    pub d1: f64,
    pub d2: f64,
}

impl WrapTerms {
    /// Computes the exact Hessians of the wrapped and unwrapped model.
    pub fn compute(model: &MlpModel, w: &[f64], x: &[f64]) -> Result<Self, NetError> {
        let phi = model
            .output_wrap()
            .ok_or_else(|| NetError::InvalidConfig("model has no output wrap".into()))?;
        let inner = model.without_wrap();
        let (f, grad_inner) = inner.value_and_grad(w, x)?;
        Ok(Self {
            hess_wrapped: model.hessian(w, x)?,
            hess_inner: inner.hessian(w, x)?,
            grad_inner,
            inner_value: f,
            d1: phi.derivative(f),
            d2: phi.second_derivative(f),
        })
    }

    /// `φ′(f)·H_f + φ″(f)·∇f∇fᵀ`
    pub fn recombined(&self) -> Matrix {
        let g = &self.grad_inner;
        Matrix::from_fn(g.len(), g.len(), |i, j| {
            self.d1 * self.hess_inner[(i, j)] + self.d2 * g[i] * g[j]
        })
    }

    /// Largest entrywise deviation relative to the largest entry of `H_g`.
    pub fn max_relative_error(&self) -> f64 {
        let r = self.recombined();
        let scale = self.hess_wrapped.max_abs().max(f64::MIN_POSITIVE);
        r.sub(&self.hess_wrapped).expect("same shape").max_abs() / scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_decomposition_is_exact() {
        let model = MlpModel::new(2, vec![5, 4], Activation::Tanh)
            .unwrap()
            .with_output_wrap(Some(Activation::Softplus));
        let w = model.init_params(11);
        let t = WrapTerms::compute(&model, &w, &[0.4, -0.9]).unwrap();
        assert!(t.max_relative_error() < 1e-12);
        assert!(t.d2 > 0.0);
        assert!(WrapTerms::compute(&model.without_wrap(), &w, &[0.4, -0.9]).is_err());
    }

    #[test]
    fn power_and_dense_paths_agree() {
        let cfg = LinearityConfig::default();
        let model = cfg.model(200).unwrap();
        let w = model.init_params(5);
        let (dense, _) = hessian_norm(&model, &w, &[1.0], 1000, 10_000, 1e-12).unwrap();
        let (power, _) = hessian_norm(&model, &w, &[1.0], 0, 10_000, 1e-12).unwrap();
        assert!((dense - power).abs() <= 1e-3 * dense, "{dense} vs {power}");
    }

    #[test]
    fn small_scan_shape_and_csv() {
        let cfg = LinearityConfig {
            widths: vec![16, 32, 64],
            probes: 4,
            ..LinearityConfig::default()
        };
        let rep = linearity_scan(&cfg).unwrap();
        assert_eq!(rep.widths(), vec![16, 32, 64]);
        for r in &rep.rows {
            assert!(r.grad_norm > 0.0 && r.hess_norm_max > 0.0 && r.ntk_drift >= 0.0);
        }
        let lines = rep.csv_lines();
        assert_eq!(lines.len(), 4);
        assert!(lines[3].starts_with("slope,"));
        assert_eq!(
            lines[0].split(',').count(),
            LinearityReport::CSV_HEADER.split(',').count()
        );
    }

    #[test]
    fn scan_is_deterministic() {
        let cfg = LinearityConfig {
            widths: vec![8, 300],
            probes: 3,
            ..LinearityConfig::default()
        };
        assert_eq!(linearity_scan(&cfg).unwrap(), linearity_scan(&cfg).unwrap());
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = LinearityConfig {
            widths: vec![8, 8],
            ..LinearityConfig::default()
        };
        assert!(linearity_scan(&cfg).is_err());
    }
}

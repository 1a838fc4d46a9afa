use std::ops::Range;

use rand::seq::index;

use super::{Objective, OptimError, ParamModel, DIVERGENCE_LOSS};
use crate::numlin::{dist, linear_fit, norm, sym_eig};
use crate::rng::{substream, tag, LabRng};

#[derive(Debug, Clone, PartialEq)]
pub struct DescentConfig {
    pub step: f64,
    pub iters: usize,
    /// Record every this many iterations; the last iterate is always recorded.
    pub record_every: usize,
    /// Optional parameter vector to report distances to.
    pub reference: Option<Vec<f64>>,
    /// Stop once a recorded loss is at or below this value.
    pub target_loss: Option<f64>,
}

impl DescentConfig {
    pub fn new(step: f64, iters: usize) -> Self {
        Self {
            step,
            iters,
            record_every: 1,
            reference: None,
            target_loss: None,
        }
    }

    pub fn record_every(mut self, k: usize) -> Self {
        self.record_every = k;
        self
    }

    pub fn reference(mut self, r: Vec<f64>) -> Self {
        self.reference = Some(r);
        self
    }

    pub fn target_loss(mut self, t: f64) -> Self {
        self.target_loss = Some(t);
        self
    }

    fn validate(&self, dim: usize) -> Result<(), OptimError> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(OptimError::InvalidConfig(format!(
                "step must be positive (got {})",
                self.step
            )));
        }
        if self.record_every == 0 {
            return Err(OptimError::InvalidConfig(
                "record_every must be at least 1".into(),
            ));
        }
        if let Some(r) = &self.reference {
            if r.len() != dim {
                return Err(OptimError::DimensionMismatch {
                    expected: dim,
                    found: r.len(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iter: usize,
    pub loss: f64,
    pub grad_norm: f64,
    pub param_norm: f64,
    /// `½‖∇L‖² / L`; infinite at an exact minimum.
    pub plstar_ratio: f64,
    pub dist_ref: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimTrace {
    pub records: Vec<TraceRecord>,
    /// Final parameters.
    pub w: Vec<f64>,
    /// Number of updates performed.
    pub iterations: usize,
}

impl OptimTrace {
    pub const CSV_HEADER: &'static str = "iter,loss,grad_norm,param_norm,plstar_ratio,dist_ref";

    pub fn csv_lines(&self) -> Vec<String> {
        self.records
            .iter()
            .map(|r| {
                format!(
                    "{},{:.12e},{:.6e},{:.6e},{:.6e},{}",
                    r.iter,
                    r.loss,
                    r.grad_norm,
                    r.param_norm,
                    r.plstar_ratio,
                    r.dist_ref.map_or(String::new(), |d| format!("{d:.6e}"))
                )
            })
            .collect()
    }

    pub fn losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.loss).collect()
    }

    pub fn final_loss(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.loss)
    }
}

/// Full-batch gradient descent `w ← w − η∇L(w)`.
pub fn gd<M: ParamModel>(
    obj: &Objective<'_, M>,
    w0: &[f64],
    cfg: &DescentConfig,
) -> Result<OptimTrace, OptimError> {
    let all: Vec<usize> = (0..obj.n()).collect();
    run(obj, w0, cfg, || all.clone())
}

/// Mini-batch SGD: each step averages the loss over `batch` indices drawn
/// uniformly without replacement from the `BATCH` substream of `seed`.
pub fn sgd<M: ParamModel>(
    obj: &Objective<'_, M>,
    w0: &[f64],
    cfg: &DescentConfig,
    batch: usize,
    seed: u64,
) -> Result<OptimTrace, OptimError> {
    let n = obj.n();
    if batch == 0 || batch > n {
        return Err(OptimError::InvalidConfig(format!(
            "batch size {batch} outside 1..={n}"
        )));
    }
    let mut rng = substream(seed, &[tag::BATCH]);
    run(obj, w0, cfg, || draw_batch(&mut rng, n, batch))
}

/// Sorted indices of a uniform size-`m` subset of `0..n`.
pub(crate) fn draw_batch(rng: &mut LabRng, n: usize, m: usize) -> Vec<usize> {
    if m == n {
        return (0..n).collect();
    }
    let mut b = index::sample(rng, n, m).into_vec();
    b.sort_unstable();
    b
}

fn run<M: ParamModel>(
    obj: &Objective<'_, M>,
    w0: &[f64],
    cfg: &DescentConfig,
    mut next_batch: impl FnMut() -> Vec<usize>,
) -> Result<OptimTrace, OptimError> {
    obj.check_params(w0)?;
    cfg.validate(w0.len())?;
    let n = obj.n();
    let mut w = w0.to_vec();
    let mut records = Vec::new();
    let mut t = 0;
    loop {
        let record = t % cfg.record_every == 0 || t == cfg.iters;
        let mut full_grad = None;
        if record {
            let (loss, g) = obj.loss_grad(&w);
            if !loss.is_finite() || loss > DIVERGENCE_LOSS {
                return Err(OptimError::Diverged { iter: t, loss });
            }
            let gn = norm(&g);
            records.push(TraceRecord {
                iter: t,
                loss,
                grad_norm: gn,
                param_norm: norm(&w),
                plstar_ratio: if loss > 0.0 {
                    0.5 * gn * gn / loss
                } else {
                    f64::INFINITY
                },
                dist_ref: cfg.reference.as_ref().map(|r| dist(&w, r)),
            });
            if cfg.target_loss.is_some_and(|target| loss <= target) {
                break;
            }
            full_grad = Some(g);
        }
        if t == cfg.iters {
            break;
        }
        let batch = next_batch();
        let g = match full_grad {
            Some(g) if batch.len() == n => g,
            _ => obj.batch_loss_grad(&w, &batch).1,
        };
        for (wi, gi) in w.iter_mut().zip(&g) {
            *wi -= cfg.step * gi;
        }
        t += 1;
        if w.iter().any(|v| !v.is_finite()) {
            return Err(OptimError::Diverged {
                iter: t,
                loss: f64::INFINITY,
            });
        }
    }
    Ok(OptimTrace {
        records,
        w,
        iterations: t,
    })
}

/// `½‖∇L(w)‖² / L(w)`, or `+∞` where the loss vanishes.
pub fn plstar_ratio<M: ParamModel>(obj: &Objective<'_, M>, w: &[f64]) -> f64 {
    let (loss, g) = obj.loss_grad(w);
    if loss > 0.0 {
        0.5 * norm(&g).powi(2) / loss
    } else {
        f64::INFINITY
    }
}

/// Smallest eigenvalue of the `n×n` tangent kernel `DF·DFᵀ` at `w`.
pub fn tangent_kernel_min_eig<M: ParamModel>(
    obj: &Objective<'_, M>,
    w: &[f64],
) -> Result<f64, OptimError> {
    obj.check_params(w)?;
    let k = obj.jacobian(w).gram_rows();
    Ok(sym_eig(&k)?.min())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    /// Slope of `ln loss` per iteration.
    pub rate: f64,
    pub r_squared: f64,
}

/// Least-squares line through `(iter, ln loss)` over the records in
/// `window`.
pub fn rate_fit(trace: &OptimTrace, window: Range<usize>) -> Result<RateFit, OptimError> {
    let recs = trace
        .records
        .get(window.clone())
        .ok_or_else(|| OptimError::InvalidConfig(format!("window {window:?} outside the trace")))?;
    if let Some(r) = recs.iter().find(|r| r.loss <= 0.0) {
        return Err(OptimError::NonPositiveLoss { iter: r.iter });
    }
    let x: Vec<f64> = recs.iter().map(|r| r.iter as f64).collect();
    let y: Vec<f64> = recs.iter().map(|r| r.loss.ln()).collect();
    let fit = linear_fit(&x, &y)
        .ok_or_else(|| OptimError::InvalidConfig("window needs two distinct iterations".into()))?;
    Ok(RateFit {
        rate: fit.slope,
        r_squared: fit.r_squared,
    })
}

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::descent::draw_batch;
use super::OptimError;
use crate::datagen::{Dataset, Task};
use crate::numlin::{sym_operator_norm, Matrix};
use crate::rng::{substream, tag};

#[derive(Debug, Clone, PartialEq)]
pub struct BatchScanConfig {
    /// Batch sizes to measure; `1` and `n` are always added.
    pub batch_grid: Vec<usize>,
    pub seeds: Vec<u64>,
    /// Target loss as a fraction of the initial loss.
    pub target_rel: f64,
    pub max_iters: usize,
}

impl Default for BatchScanConfig {
    fn default() -> Self {
        Self {
            batch_grid: vec![1, 2, 4, 8, 16, 32, 64, 128, 256, 512],
            seeds: (0..5).collect(),
            target_rel: 1e-8,
            max_iters: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// `m·iters(m) ≤ 2·iters(1)`
    LinearScaling,
    Saturation,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::LinearScaling => "linear",
            Regime::Saturation => "saturation",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchRow {
    pub m: usize,
    pub step: f64,
    pub iters: Vec<usize>,
    pub median_iters: f64,
    /// `m·iters(m) / iters(1)`
    pub work_ratio: f64,
    /// `iters(m) / iters(n)`
    pub full_ratio: f64,
    pub regime: Regime,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchScalingReport {
    pub n: usize,
    pub rows: Vec<BatchRow>,
    /// `tr(H)/λmax(H)` with `H = XᵀX/n`.
    pub mstar_theory: f64,
    /// `max‖xᵢ‖²/λmax(H)`.
    pub mstar_maxnorm: f64,
    pub trace_h: f64,
    pub lambda_max_h: f64,
    pub max_sq_norm: f64,
}

impl BatchScalingReport {
    pub const CSV_HEADER: &'static str = "m,median_iters,regime,mstar_theory";

    pub fn csv_lines(&self) -> Vec<String> {
        self.rows
            .iter()
            .map(|r| {
                format!(
                    "{},{},{},{:.6}",
                    r.m,
                    r.median_iters,
                    r.regime.as_str(),
                    self.mstar_theory
                )
            })
            .collect()
    }

    pub fn row(&self, m: usize) -> Option<&BatchRow> {
        self.rows.iter().find(|r| r.m == m)
    }
}

/// Spectral statistics of `H = XᵀX/n`, computed through `G = XXᵀ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct HessianStats {
    pub trace: f64,
    pub lambda_max: f64,
    pub max_sq_norm: f64,
}

impl HessianStats {
    pub fn from_gram(g: &Matrix) -> Result<Self, OptimError> {
        let n = g.rows() as f64;
        let lambda = sym_operator_norm(g.rows(), 100_000, |v| g.matvec(v).expect("square"))?;
        Ok(Self {
            trace: g.trace() / n,
            lambda_max: lambda / n,
            max_sq_norm: g.diag().into_iter().fold(0.0, f64::max),
        })
    }

    /// `η(m) = m / (max‖xᵢ‖² + (m − 1)·λmax(H))`
    pub fn step(&self, m: usize) -> f64 {
        m as f64 / (self.max_sq_norm + (m as f64 - 1.0) * self.lambda_max)
    }
}

/// Iterations-to-target of mini-batch SGD on linear least squares, across
/// batch sizes, with the step chosen by [`HessianStats::step`].
///
/// Runs in residual space: with `G = XXᵀ` and `r = Xw − y`, an SGD step on
/// batch `B` is `r ← r − (η/m) Σ_{j∈B} rⱼ G[:, j]`, which costs `O(n·m)`
/// regardless of the feature dimension.
pub fn critical_batch_scan(
    ds: &Dataset,
    cfg: &BatchScanConfig,
) -> Result<BatchScalingReport, OptimError> {
    let n = ds.len();
    if n == 0 {
        return Err(OptimError::InvalidConfig("dataset is empty".into()));
    }
    if cfg.seeds.is_empty() {
        return Err(OptimError::InvalidConfig("need at least one seed".into()));
    }
    if !(cfg.target_rel > 0.0 && cfg.target_rel < 1.0) {
        return Err(OptimError::InvalidConfig(
            "target_rel must lie in (0, 1)".into(),
        ));
    }
    if let Some(&m) = cfg.batch_grid.iter().find(|&&m| m == 0 || m > n) {
        return Err(OptimError::InvalidConfig(format!(
            "batch size {m} outside 1..={n}"
        )));
    }
    let mut grid = cfg.batch_grid.clone();
    grid.extend([1, n]);
    grid.sort_unstable();
    grid.dedup();

    let g = ds.x.gram_rows();
    let stats = HessianStats::from_gram(&g)?;

    let jobs: Vec<(usize, u64)> = grid
        .iter()
        .flat_map(|&m| cfg.seeds.iter().map(move |&s| (m, s)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(m, seed)| {
            residual_sgd_iters(
                &g,
                &ds.y,
                m,
                stats.step(m),
                seed,
                cfg.target_rel,
                cfg.max_iters,
            )
        })
        .collect::<Result<Vec<_>, _>>()?;

    let k = cfg.seeds.len();
    let mut rows: Vec<BatchRow> = grid
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            let iters = results[i * k..(i + 1) * k].to_vec();
            BatchRow {
                m,
                step: stats.step(m),
                median_iters: median(&iters),
                iters,
                work_ratio: 0.0,
                full_ratio: 0.0,
                regime: Regime::Saturation,
            }
        })
        .collect();
    let base = rows[0].median_iters;
    let full = rows.last().expect("grid contains n").median_iters;
    for r in &mut rows {
        r.work_ratio = r.m as f64 * r.median_iters / base;
        r.full_ratio = r.median_iters / full;
        r.regime = if r.work_ratio <= 2.0 {
            Regime::LinearScaling
        } else {
            Regime::Saturation
        };
    }
    Ok(BatchScalingReport {
        n,
        rows,
        mstar_theory: stats.trace / stats.lambda_max,
        mstar_maxnorm: stats.max_sq_norm / stats.lambda_max,
        trace_h: stats.trace,
        lambda_max_h: stats.lambda_max,
        max_sq_norm: stats.max_sq_norm,
    })
}

/// SGD from `w = 0` in residual space; returns the first iteration at which
/// the loss is at most `target_rel` times its initial value.
pub(crate) fn residual_sgd_iters(
    g: &Matrix,
    y: &[f64],
    m: usize,
    step: f64,
    seed: u64,
    target_rel: f64,
    cap: usize,
) -> Result<usize, OptimError> {
    let n = y.len();
    let mut r: Vec<f64> = y.iter().map(|v| -v).collect();
    let sq = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>();
    let target = target_rel * sq(&r);
    let mut rng = substream(seed, &[tag::BATCH]);
    let scale = step / m as f64;
    for t in 1..=cap {
        let batch = draw_batch(&mut rng, n, m);
        let coef: Vec<(usize, f64)> = batch.iter().map(|&j| (j, scale * r[j])).collect();
        for &(j, c) in &coef {
            for (ri, gij) in r.iter_mut().zip(g.row(j)) {
                *ri -= c * gij;
            }
        }
        let loss = sq(&r);
        if !loss.is_finite() {
            return Err(OptimError::Diverged { iter: t, loss });
        }
        if loss <= target {
            return Ok(t);
        }
    }
    Err(OptimError::TargetUnreachable { cap })
}

fn median(v: &[usize]) -> f64 {
    let mut s = v.to_vec();
    s.sort_unstable();
    let k = s.len();
    if k % 2 == 1 {
        s[k / 2] as f64
    } else {
        0.5 * (s[k / 2 - 1] + s[k / 2]) as f64
    }
}

/// Gaussian features with one spiked direction: `xᵢ ~ N(0, diag(spike, 1, …, 1))`
/// and targets `yᵢ ~ N(0, 1)`. Interpolable whenever `d ≥ n`.
pub fn spiked_gaussian_problem(
    n: usize,
    d: usize,
    spike: f64,
    seed: u64,
) -> Result<Dataset, OptimError> {
    if n == 0 || d == 0 || !(spike > 0.0 && spike.is_finite()) {
        return Err(OptimError::InvalidConfig(
            "need n, d ≥ 1 and a positive spike".into(),
        ));
    }
    let mut rng = substream(seed, &[tag::SAMPLE]);
    let s = spike.sqrt();
    let x = Matrix::from_fn(n, d, |_, j| {
        let z: f64 = StandardNormal.sample(&mut rng);
        if j == 0 {
            s * z
        } else {
            z
        }
    });
    let y = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    Dataset::new(x, y, Task::Regression).map_err(|e| OptimError::InvalidConfig(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::{sgd, DescentConfig, LinearModel, Objective};

    #[test]
    fn isotropic_and_rank_one_critical_batch() {
        let iso = HessianStats::from_gram(&Matrix::identity(6).gram_rows()).unwrap();
        assert!((iso.trace / iso.lambda_max - 6.0).abs() < 1e-9);
        let x = Matrix::from_fn(5, 3, |i, j| if j == 0 { 1.0 + i as f64 } else { 0.0 });
        let r1 = HessianStats::from_gram(&x.gram_rows()).unwrap();
        assert!((r1.trace / r1.lambda_max - 1.0).abs() < 1e-9);
    }

    #[test]
    fn step_rule_endpoints() {
        let s = HessianStats {
            trace: 10.0,
            lambda_max: 2.0,
            max_sq_norm: 8.0,
        };
        assert_eq!(s.step(1), 1.0 / 8.0);
        assert_eq!(s.step(4), 4.0 / 14.0);
    }

    #[test]
    fn residual_simulation_matches_explicit_sgd() {
        let ds = spiked_gaussian_problem(16, 40, 5.0, 3).unwrap();
        let g = ds.x.gram_rows();
        let stats = HessianStats::from_gram(&g).unwrap();
        let m = 4;
        let iters = residual_sgd_iters(&g, &ds.y, m, stats.step(m), 7, 1e-4, 100_000).unwrap();
        let model = LinearModel { dim: 40 };
        let obj = Objective::square(&model, &ds).unwrap();
        let cfg = DescentConfig::new(stats.step(m), iters);
        let trace = sgd(&obj, &vec![0.0; 40], &cfg, m, 7).unwrap();
        let l0 = trace.records[0].loss;
        assert!(trace.final_loss() <= 1e-4 * l0 * (1.0 + 1e-9));
        assert!(trace.records[iters - 1].loss > 1e-4 * l0);
    }

    #[test]
    fn small_scan_regimes() {
        let ds = spiked_gaussian_problem(64, 256, 40.0, 1).unwrap();
        let cfg = BatchScanConfig {
            batch_grid: vec![1, 2, 4, 8, 16, 32, 64],
            seeds: vec![0, 1, 2],
            target_rel: 1e-6,
            max_iters: 200_000,
        };
        let rep = critical_batch_scan(&ds, &cfg).unwrap();
        assert!(rep.mstar_theory >= 1.0 && rep.mstar_theory <= rep.mstar_maxnorm);
        assert_eq!(rep.row(1).unwrap().regime, Regime::LinearScaling);
        assert_eq!(rep.row(64).unwrap().regime, Regime::Saturation);
        assert_eq!(rep.csv_lines().len(), 7);
        let again = critical_batch_scan(&ds, &cfg).unwrap();
        assert_eq!(rep, again);
    }

    #[test]
    fn rejects_bad_config() {
        let ds = spiked_gaussian_problem(8, 10, 2.0, 0).unwrap();
        let cfg = BatchScanConfig {
            batch_grid: vec![9],
            ..BatchScanConfig::default()
        };
        assert!(critical_batch_scan(&ds, &cfg).is_err());
    }
}

use rayon::prelude::*;

use super::{rff_fit_minnorm, rff_frequencies, KernelError, INTERPOLATION_TOL};
use crate::datagen::Dataset;

#[derive(Debug, Clone)]
pub struct SweepConfig {
    /// Feature counts, strictly ascending.
    pub m_grid: Vec<usize>,
    pub replicates: usize,
    /// Bandwidth of the gaussian kernel the features approximate.
    pub bandwidth: f64,
    pub seed: u64,
}

/// One fitted model of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveRecord {
    pub m: usize,
    pub rep: usize,
    pub train_mse: f64,
    pub test_mse: f64,
    pub test_01: f64,
    pub coeff_norm: f64,
    pub condition_number: f64,
    /// Set on the smallest `m` of this replicate that interpolates.
    pub threshold_flag: bool,
}

impl CurveRecord {
    pub const CSV_HEADER: &'static str =
        "m,rep,train_mse,test_mse,test_01,coeff_norm,threshold_flag";

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{:.6e},{:.6e},{:.6},{:.6e},{}",
            self.m,
            self.rep,
            self.train_mse,
            self.test_mse,
            self.test_01,
            self.coeff_norm,
            u8::from(self.threshold_flag)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanStderr {
    pub mean: f64,
    pub stderr: f64,
}

impl MeanStderr {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let stderr = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
        } else {
            0.0
        };
        Self { mean, stderr }
    }
}

/// Replicate-averaged curve at one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub m: usize,
    pub train_mse: MeanStderr,
    pub test_mse: MeanStderr,
    pub test_01: MeanStderr,
    pub coeff_norm: MeanStderr,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    /// Ordered by replicate, then `m`.
    pub records: Vec<CurveRecord>,
    pub curve: Vec<CurvePoint>,
    /// Per-replicate interpolation threshold.
    pub rep_thresholds: Vec<Option<usize>>,
    /// Smallest `m` at which the mean training loss interpolates.
    pub threshold: Option<usize>,
}

impl SweepResult {
    pub fn records_for(&self, rep: usize) -> impl Iterator<Item = &CurveRecord> {
        self.records.iter().filter(move |r| r.rep == rep)
    }

    pub fn grid_index(&self, m: usize) -> Option<usize> {
        self.curve.iter().position(|p| p.m == m)
    }
}

/// Fits the minimum-norm RFF model for every `(replicate, m)` pair.
///
/// Each replicate draws one frequency matrix at the largest `m` and uses
/// its leading rows for smaller `m`, so model classes are nested.
pub fn double_descent_sweep(
    train: &Dataset,
    test: &Dataset,
    cfg: &SweepConfig,
) -> Result<SweepResult, KernelError> {
    if cfg.m_grid.is_empty() || cfg.m_grid[0] == 0 || cfg.m_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(KernelError::InvalidSweep(
            "m_grid must be nonempty, positive and strictly ascending".into(),
        ));
    }
    if cfg.replicates == 0 {
        return Err(KernelError::InvalidSweep(
            "need at least one replicate".into(),
        ));
    }
    if !(cfg.bandwidth > 0.0 && cfg.bandwidth.is_finite()) {
        return Err(KernelError::InvalidBandwidth(cfg.bandwidth));
    }
    if train.dim() != test.dim() {
        return Err(KernelError::DimensionMismatch {
            expected: train.dim(),
            found: test.dim(),
        });
    }
    let m_max = *cfg.m_grid.last().expect("nonempty");
    let frequencies: Vec<_> = (0..cfg.replicates)
        .map(|rep| rff_frequencies(m_max, train.dim(), cfg.bandwidth, cfg.seed, &[rep as u64]))
        .collect();

    let jobs: Vec<(usize, usize)> = (0..cfg.replicates)
        .flat_map(|rep| cfg.m_grid.iter().map(move |&m| (rep, m)))
        .collect();
    let mut records = jobs
        .par_iter()
        .map(|&(rep, m)| {
            let v = frequencies[rep].select_rows(&(0..m).collect::<Vec<_>>());
            let model = rff_fit_minnorm(&v, train)?;
            let train_pred = model.predict_batch(&train.x)?;
            let test_pred = model.predict_batch(&test.x)?;
            Ok(CurveRecord {
                m,
                rep,
                train_mse: mse(&train_pred, &train.y),
                test_mse: mse(&test_pred, &test.y),
                test_01: zero_one(&test_pred, &test.y),
                coeff_norm: model.coeff_norm(),
                condition_number: model.condition_number,
                threshold_flag: false,
            })
        })
        .collect::<Result<Vec<_>, KernelError>>()?;

    let g = cfg.m_grid.len();
    let mut rep_thresholds = Vec::with_capacity(cfg.replicates);
    for rep in 0..cfg.replicates {
        let rows = &mut records[rep * g..(rep + 1) * g];
        let hit = rows.iter().position(|r| r.train_mse <= INTERPOLATION_TOL);
        if let Some(i) = hit {
            rows[i].threshold_flag = true;
        }
        rep_thresholds.push(hit.map(|i| cfg.m_grid[i]));
    }

    let curve: Vec<CurvePoint> = cfg
        .m_grid
        .iter()
        .enumerate()
        .map(|(k, &m)| {
            let col = |f: fn(&CurveRecord) -> f64| -> MeanStderr {
                let v: Vec<f64> = (0..cfg.replicates)
                    .map(|rep| f(&records[rep * g + k]))
                    .collect();
                MeanStderr::of(&v)
            };
            CurvePoint {
                m,
                train_mse: col(|r| r.train_mse),
                test_mse: col(|r| r.test_mse),
                test_01: col(|r| r.test_01),
                coeff_norm: col(|r| r.coeff_norm),
            }
        })
        .collect();
    let threshold = curve
        .iter()
        .find(|p| p.train_mse.mean <= INTERPOLATION_TOL)
        .map(|p| p.m);

    Ok(SweepResult {
        records,
        curve,
        rep_thresholds,
        threshold,
    })
}

fn mse(pred: &[f64], y: &[f64]) -> f64 {
    pred.iter()
        .zip(y)
        .map(|(p, t)| (p - t).powi(2))
        .sum::<f64>()
        / y.len() as f64
}

fn zero_one(pred: &[f64], y: &[f64]) -> f64 {
    let wrong = pred
        .iter()
        .zip(y)
        .filter(|(p, t)| (if **p >= 0.0 { 1.0 } else { -1.0 }) != **t)
        .count();
    wrong as f64 / y.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{sample, DistributionSpec, Family};

    fn sweep(n: usize, grid: Vec<usize>, reps: usize) -> SweepResult {
        let spec = DistributionSpec::new(
            Family::TwoGaussians {
                dim: 5,
                separation: 2.0,
                scale: 1.0,
            },
            1,
        )
        .unwrap();
        let train = sample(&spec, n).unwrap();
        let test = sample(&spec.with_seed(2), 200).unwrap();
        let cfg = SweepConfig {
            m_grid: grid,
            replicates: reps,
            bandwidth: 1.0,
            seed: 3,
        };
        double_descent_sweep(&train, &test, &cfg).unwrap()
    }

    #[test]
    fn train_loss_is_nonincreasing_in_m() {
        let res = sweep(40, vec![2, 5, 10, 15, 20, 25, 40, 80], 3);
        for rep in 0..3 {
            let losses: Vec<f64> = res.records_for(rep).map(|r| r.train_mse).collect();
            for w in losses.windows(2) {
                assert!(w[1] <= w[0] + 1e-9, "{losses:?}");
            }
        }
        assert!(res.threshold.is_some());
    }

    #[test]
    fn threshold_flags_first_interpolating_fit() {
        let res = sweep(30, vec![5, 10, 15, 16, 30, 60], 2);
        for rep in 0..2 {
            let flagged: Vec<&CurveRecord> =
                res.records_for(rep).filter(|r| r.threshold_flag).collect();
            assert_eq!(flagged.len(), 1);
            assert_eq!(Some(flagged[0].m), res.rep_thresholds[rep]);
            assert!(res
                .records_for(rep)
                .filter(|r| r.m < flagged[0].m)
                .all(|r| r.train_mse > INTERPOLATION_TOL));
        }
    }

    #[test]
    fn deterministic_across_runs() {
        let a = sweep(20, vec![5, 10, 40], 2);
        let b = sweep(20, vec![5, 10, 40], 2);
        assert_eq!(a.records, b.records);
    }

    #[test]
    fn csv_row_layout() {
        let r = CurveRecord {
            m: 10,
            rep: 2,
            train_mse: 0.5,
            test_mse: 1.0,
            test_01: 0.25,
            coeff_norm: 3.0,
            condition_number: 1.0,
            threshold_flag: true,
        };
        assert_eq!(
            r.to_csv_row().split(',').count(),
            CurveRecord::CSV_HEADER.split(',').count()
        );
        assert!(r.to_csv_row().ends_with(",1"));
    }

    #[test]
    fn rejects_bad_grids() {
        let spec = DistributionSpec::new(
            Family::TwoGaussians {
                dim: 2,
                separation: 2.0,
                scale: 1.0,
            },
            1,
        )
        .unwrap();
        let d = sample(&spec, 10).unwrap();
        let cfg = SweepConfig {
            m_grid: vec![5, 5],
            replicates: 1,
            bandwidth: 1.0,
            seed: 0,
        };
        assert!(matches!(
            double_descent_sweep(&d, &d, &cfg),
            Err(KernelError::InvalidSweep(_))
        ));
    }

    #[test]
    fn mean_stderr() {
        let s = MeanStderr::of(&[1.0, 3.0]);
        assert_eq!(s.mean, 2.0);
        assert!((s.stderr - 1.0).abs() < 1e-15);
    }
}

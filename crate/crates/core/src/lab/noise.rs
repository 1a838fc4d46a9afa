use rayon::prelude::*;

use super::config::{check_unit_interval, positive};
use super::{
    bandwidth_for, config_err, default_bandwidth, render_csv, train_test, zero_one_risk, Artifact,
    Experiment, ExperimentConfig, LabError, Provenance, RunOutput,
};
use crate::datagen::{bayes_risk, corrupt, CorruptionSpec, DistributionSpec, Family};
use crate::kernelmach::{fit_interpolating, KernelFamily, KernelSpec, MeanStderr};
use crate::rng::derive_seed;

/// Interpolating kernel machines trained and tested on label-corrupted data.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseInterpParams {
    pub spec: DistributionSpec,
    pub n_train: usize,
    pub n_test: usize,
    pub q_grid: Vec<f64>,
    pub kernels: Vec<KernelFamily>,
    /// `None` selects the median pairwise training distance.
    pub bandwidth: Option<f64>,
    pub replicates: usize,
    pub seed: u64,
}

impl NoiseInterpParams {
    pub fn default_family() -> Family {
        Family::TwoGaussians {
            dim: 20,
            separation: 2.0,
            scale: 1.0,
        }
    }

    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self, LabError> {
        let seed = cfg.seed();
        let spec = cfg.data.distribution_or(&Self::default_family(), seed)?;
        let kernels = cfg.model.kernels_or(&[KernelFamily::Laplace])?;
        let bandwidth = default_bandwidth(cfg, &spec);
        if let Some(b) = bandwidth {
            KernelSpec::new(kernels[0], b)?;
        }
        let q_grid = cfg
            .sweep
            .q
            .clone()
            .unwrap_or_else(|| vec![0.0, 0.2, 0.5, 0.8]);
        for &q in &q_grid {
            check_unit_interval("sweep.q", q)?;
        }
        if q_grid.is_empty() {
            return config_err("sweep.q is empty");
        }
        Ok(Self {
            spec,
            n_train: positive("data.n_train", cfg.data.n_train.unwrap_or(2000))?,
            n_test: positive("data.n_test", cfg.data.n_test.unwrap_or(2000))?,
            q_grid,
            kernels,
            bandwidth,
            replicates: positive("sweep.seeds", cfg.sweep.seeds.unwrap_or(10))?,
            seed,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseRow {
    pub kernel: KernelFamily,
    pub q: f64,
    pub rep: usize,
    pub train_risk: f64,
    pub test_risk: f64,
    pub bayes_risk: f64,
}

impl NoiseRow {
    pub fn gap(&self) -> f64 {
        self.test_risk - self.train_risk
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSummary {
    pub kernel: KernelFamily,
    pub q: f64,
    pub test_risk: MeanStderr,
    pub gap: MeanStderr,
    pub bayes_risk: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseInterpReport {
    /// Ordered by kernel, then `q`, then replicate.
    pub rows: Vec<NoiseRow>,
    pub summary: Vec<NoiseSummary>,
}

impl NoiseInterpReport {
    pub const CSV_HEADER: &'static str = "kernel,q,rep,train_risk,test_risk,bayes_risk,gap";

    pub fn csv_lines(&self) -> Vec<String> {
        self.rows
            .iter()
            .map(|r| {
                format!(
                    "{},{},{},{:.6},{:.6},{:.6},{:.6}",
                    kernel_name(r.kernel),
                    r.q,
                    r.rep,
                    r.train_risk,
                    r.test_risk,
                    r.bayes_risk,
                    r.gap()
                )
            })
            .collect()
    }
}

pub(crate) fn kernel_name(k: KernelFamily) -> &'static str {
    match k {
        KernelFamily::Laplace => "laplace",
        KernelFamily::Gaussian => "gaussian",
    }
}

pub fn run_noise_interp(p: &NoiseInterpParams) -> Result<NoiseInterpReport, LabError> {
    let jobs: Vec<(usize, usize, usize)> = (0..p.kernels.len())
        .flat_map(|k| {
            (0..p.q_grid.len()).flat_map(move |qi| (0..p.replicates).map(move |r| (k, qi, r)))
        })
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(k, qi, rep)| {
            let q = p.q_grid[qi];
            let r = rep as u64;
            let seeds = (derive_seed(p.seed, &[r, 0]), derive_seed(p.seed, &[r, 1]));
            let (train, test) = train_test(&p.spec, p.n_train, p.n_test, seeds)?;
            // Noise draws are shared across q, so levels differ only in q.
            let train = corrupt(
                &train,
                &CorruptionSpec::new(q, derive_seed(p.seed, &[r, 2]))?,
            )?;
            let test = corrupt(
                &test,
                &CorruptionSpec::new(q, derive_seed(p.seed, &[r, 3]))?,
            )?;
            let kernel = KernelSpec::new(p.kernels[k], bandwidth_for(p.bandwidth, &train))?;
            let machine = fit_interpolating(&kernel, &train)?;
            Ok(NoiseRow {
                kernel: p.kernels[k],
                q,
                rep,
                train_risk: zero_one_risk(&machine.predict_batch(&train.x)?, &train.y),
                test_risk: zero_one_risk(&machine.predict_batch(&test.x)?, &test.y),
                bayes_risk: bayes_risk(&p.spec, q)?,
            })
        })
        .collect::<Result<Vec<_>, LabError>>()?;

    let summary = rows
        .chunks(p.replicates)
        .map(|c| NoiseSummary {
            kernel: c[0].kernel,
            q: c[0].q,
            test_risk: MeanStderr::of(&c.iter().map(|r| r.test_risk).collect::<Vec<_>>()),
            gap: MeanStderr::of(&c.iter().map(NoiseRow::gap).collect::<Vec<_>>()),
            bayes_risk: c[0].bayes_risk,
        })
        .collect();
    Ok(NoiseInterpReport { rows, summary })
}

pub(super) fn run_from_config(cfg: &ExperimentConfig) -> Result<RunOutput, LabError> {
    let p = NoiseInterpParams::from_config(cfg)?;
    let report = run_noise_interp(&p)?;
    let prov = Provenance::of(Experiment::NoiseInterp, &p, p.seed);
    let summary = report
        .summary
        .iter()
        .map(|s| {
            format!(
                "{} q={}: test risk {:.4} ± {:.4}, bayes {:.4}, gap {:.4}",
                kernel_name(s.kernel),
                s.q,
                s.test_risk.mean,
                s.test_risk.stderr,
                s.bayes_risk,
                s.gap.mean
            )
        })
        .collect();
    Ok(RunOutput {
        artifacts: vec![Artifact {
            file_name: "noise_interp.csv".into(),
            contents: render_csv(&prov, NoiseInterpReport::CSV_HEADER, &report.csv_lines()),
        }],
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> NoiseInterpParams {
        let cfg = ExperimentConfig::from_toml_str(
            "data.dim = 4\ndata.n_train = 150\ndata.n_test = 300\nsweep.seeds = 2\nsweep.q = [0.0, 0.6]",
        )
        .unwrap();
        NoiseInterpParams::from_config(&cfg).unwrap()
    }

    #[test]
    fn interpolates_and_reports_every_cell() {
        let p = small();
        let rep = run_noise_interp(&p).unwrap();
        assert_eq!(rep.rows.len(), 4);
        assert_eq!(rep.summary.len(), 2);
        for r in &rep.rows {
            assert_eq!(r.train_risk, 0.0);
            assert!((0.0..=1.0).contains(&r.test_risk));
        }
        assert!(
            (rep.summary[1].bayes_risk - (0.3 + 0.4 * rep.summary[0].bayes_risk)).abs() < 1e-12
        );
    }

    #[test]
    fn csv_is_reproducible() {
        let p = small();
        let a = run_noise_interp(&p).unwrap().csv_lines();
        let b = run_noise_interp(&p).unwrap().csv_lines();
        assert_eq!(a, b);
        assert_eq!(
            a[0].split(',').count(),
            NoiseInterpReport::CSV_HEADER.split(',').count()
        );
    }

    #[test]
    fn rejects_out_of_range_noise() {
        let cfg = ExperimentConfig::from_toml_str("sweep.q = [1.5]").unwrap();
        assert!(NoiseInterpParams::from_config(&cfg)
            .unwrap_err()
            .is_config_error());
    }
}

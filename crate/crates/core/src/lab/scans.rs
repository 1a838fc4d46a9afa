use rayon::prelude::*;

use super::config::positive;
use super::{
    config_err, render_csv, Artifact, Experiment, ExperimentConfig, LabError, Provenance, RunOutput,
};
use crate::direct::simplex_disagreement_fraction;
use crate::netmodels::{linearity_scan, Activation, LinearityConfig, LinearityReport, WrapTerms};
use crate::optim::{
    critical_batch_scan, spiked_gaussian_problem, BatchScalingReport, BatchScanConfig,
};
use crate::rng::derive_seed;

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexParams {
    pub dims: Vec<usize>,
    pub draws: usize,
    pub seed: u64,
}

impl SimplexParams {
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self, LabError> {
        let dims = cfg.sweep.d.clone().unwrap_or_else(|| vec![1, 2, 3, 6, 10]);
        if dims.is_empty() || dims.contains(&0) {
            return config_err("sweep.d must be nonempty and positive");
        }
        Ok(Self {
            dims,
            draws: positive("sweep.draws", cfg.sweep.draws.unwrap_or(1_000_000))?,
            seed: cfg.seed(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexRow {
    pub d: usize,
    pub estimate: f64,
    pub stderr: f64,
    /// `2⁻ᵈ`
    pub exact: f64,
}

impl SimplexRow {
    pub const CSV_HEADER: &'static str = "d,estimate,stderr,exact,z";

    /// Deviation from the exact volume in standard errors.
    pub fn z(&self) -> f64 {
        (self.estimate - self.exact) / self.stderr
    }

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{:.8},{:.8},{:.8},{:.4}",
            self.d,
            self.estimate,
            self.stderr,
            self.exact,
            self.z()
        )
    }
}

pub fn run_simplex_blessing(p: &SimplexParams) -> Vec<SimplexRow> {
    p.dims
        .par_iter()
        .map(|&d| {
            let (estimate, stderr) =
                simplex_disagreement_fraction(d, p.draws, derive_seed(p.seed, &[d as u64]));
            SimplexRow {
                d,
                estimate,
                stderr,
                exact: 0.5f64.powi(d as i32),
            }
        })
        .collect()
}

pub(super) fn simplex_from_config(cfg: &ExperimentConfig) -> Result<RunOutput, LabError> {
    let p = SimplexParams::from_config(cfg)?;
    let rows = run_simplex_blessing(&p);
    let prov = Provenance::of(Experiment::Simplex, &p, p.seed);
    let summary = rows
        .iter()
        .map(|r| {
            format!(
                "d={}: {:.6} ± {:.6} vs 2^-d = {:.6}",
                r.d, r.estimate, r.stderr, r.exact
            )
        })
        .collect();
    let lines: Vec<String> = rows.iter().map(SimplexRow::to_csv_row).collect();
    Ok(RunOutput {
        artifacts: vec![Artifact {
            file_name: "simplex.csv".into(),
            contents: render_csv(&prov, SimplexRow::CSV_HEADER, &lines),
        }],
        summary,
    })
}

/// Mini-batch SGD on a spiked Gaussian least-squares problem.
#[derive(Debug, Clone, PartialEq)]
pub struct SgdScalingParams {
    pub n: usize,
    pub d: usize,
    pub spike: f64,
    pub scan: BatchScanConfig,
    pub seed: u64,
}

impl SgdScalingParams {
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self, LabError> {
        let seed = cfg.seed();
        let n = positive("data.n_train", cfg.data.n_train.unwrap_or(512))?;
        let d = positive("data.dim", cfg.data.dim.unwrap_or(4 * n))?;
        let batch_grid = cfg.sweep.batch.clone().unwrap_or_else(|| {
            std::iter::successors(Some(1usize), |m| Some(2 * m))
                .take_while(|&m| m <= n)
                .collect()
        });
        let seeds = positive("sweep.seeds", cfg.sweep.seeds.unwrap_or(3))?;
        Ok(Self {
            n,
            d,
            spike: cfg.data.spike.unwrap_or(300.0),
            scan: BatchScanConfig {
                batch_grid,
                seeds: (0..seeds as u64)
                    .map(|r| derive_seed(seed, &[1, r]))
                    .collect(),
                target_rel: cfg.sweep.target_rel.unwrap_or(1e-8),
                max_iters: positive("sweep.max_iters", cfg.sweep.max_iters.unwrap_or(1_000_000))?,
            },
            seed,
        })
    }
}

pub fn run_sgd_scaling(p: &SgdScalingParams) -> Result<BatchScalingReport, LabError> {
    let ds = spiked_gaussian_problem(p.n, p.d, p.spike, derive_seed(p.seed, &[0]))?;
    Ok(critical_batch_scan(&ds, &p.scan)?)
}

pub(super) fn sgd_scaling_from_config(cfg: &ExperimentConfig) -> Result<RunOutput, LabError> {
    let p = SgdScalingParams::from_config(cfg)?;
    let report = run_sgd_scaling(&p)?;
    let prov = Provenance::of(Experiment::SgdScaling, &p, p.seed);
    let mut summary = vec![format!(
        "m* = tr(H)/λmax(H) = {:.3} (max-norm bound {:.3})",
        report.mstar_theory, report.mstar_maxnorm
    )];
    summary.extend(report.rows.iter().map(|r| {
        format!(
            "m={}: median iters {}, m·iters/iters(1) = {:.3}, iters/iters(n) = {:.3} [{}]",
            r.m,
            r.median_iters,
            r.work_ratio,
            r.full_ratio,
            r.regime.as_str()
        )
    }));
    Ok(RunOutput {
        artifacts: vec![Artifact {
            file_name: "sgd_scaling.csv".into(),
            contents: render_csv(&prov, BatchScalingReport::CSV_HEADER, &report.csv_lines()),
        }],
        summary,
    })
}

#[derive(Debug, Clone)]
pub struct LinearityParams {
    pub scan: LinearityConfig,
}

impl LinearityParams {
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self, LabError> {
        let base = LinearityConfig::default();
        let scan = LinearityConfig {
            widths: cfg.sweep.widths.clone().unwrap_or(base.widths.clone()),
            depth: positive("model.depth", cfg.model.depth.unwrap_or(base.depth))?,
            activation: cfg.model.activation_or(Activation::Tanh)?,
            output_wrap: cfg.model.output_wrap()?,
            radius: cfg.sweep.radius.unwrap_or(base.radius),
            probes: positive("sweep.probes", cfg.sweep.probes.unwrap_or(base.probes))?,
            seed: cfg.seed(),
            ..base
        };
        scan.validate()?;
        Ok(Self { scan })
    }
}

pub fn run_linearity(p: &LinearityParams) -> Result<LinearityReport, LabError> {
    Ok(linearity_scan(&p.scan)?)
}

pub(super) fn linearity_from_config(cfg: &ExperimentConfig) -> Result<RunOutput, LabError> {
    let p = LinearityParams::from_config(cfg)?;
    let report = run_linearity(&p)?;
    let prov = Provenance::of(Experiment::Linearity, &p, p.scan.seed);
    let mut summary = vec![format!(
        "log-log slopes vs width: ‖∇f‖ {:.3}, max ‖H‖ {:.3}, tangent-kernel drift {:.3}",
        report.grad_slope, report.hess_slope, report.drift_slope
    )];
    if p.scan.output_wrap.is_some() {
        let model = p.scan.model(p.scan.widths[0])?;
        let w = model.init_params(p.scan.seed);
        let terms = WrapTerms::compute(&model, &w, &p.scan.input)?;
        summary.push(format!(
            "wrapped Hessian decomposition at m={}: max relative deviation {:.2e}",
            p.scan.widths[0],
            terms.max_relative_error()
        ));
    }
    Ok(RunOutput {
        artifacts: vec![Artifact {
            file_name: "linearity.csv".into(),
            contents: render_csv(&prov, LinearityReport::CSV_HEADER, &report.csv_lines()),
        }],
        summary,
    })
}

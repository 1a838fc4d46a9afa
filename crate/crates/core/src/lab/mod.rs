//! Experiment runners.
//!
//! Each experiment resolves an [`ExperimentConfig`] into a typed parameter
//! struct, runs, and returns [`Artifact`]s (CSV tables, plot scripts) for the
//! caller to write out. Runs are pure functions of their parameters: the same
//! config and seed give byte-identical artifacts.

mod config;
mod double_descent;
mod loss_compare;
mod noise;
mod raisin;
mod scans;

use std::fmt::Debug;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::datagen::{sample, DataError, Dataset, DistributionSpec, Family};
use crate::direct::DirectError;
use crate::kernelmach::{median_pairwise_distance, KernelError};
use crate::netmodels::NetError;
use crate::numlin::LinalgError;
use crate::optim::OptimError;

pub use config::{
    DataConfig, Experiment, ExperimentConfig, ModelConfig, SweepGrid, FORMAT_VERSION,
};
pub use double_descent::{
    run_double_descent, DoubleDescentAnalysis, DoubleDescentParams, DoubleDescentRun,
};
pub use loss_compare::{
    run_loss_comparison, LossArm, LossCompareParams, LossCompareReport, LossSummary,
};
pub use noise::{run_noise_interp, NoiseInterpParams, NoiseInterpReport, NoiseRow, NoiseSummary};
pub use raisin::{
    run_raisin_search, Predictor, PredictorKind, RaisinParams, RaisinQuery, RaisinReport,
    RaisinSummary,
};
pub use scans::{
    run_linearity, run_sgd_scaling, run_simplex_blessing, LinearityParams, SgdScalingParams,
    SimplexParams, SimplexRow,
};

#[derive(Debug, Error)]
pub enum LabError {
    #[error("config error: {0}")]
    Config(String),
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("no label-corrupted training point disagrees with the prediction (is q = 0?)")]
    NoCorruptedNeighbor,
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Direct(#[from] DirectError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

impl LabError {
    /// Whether the failure lies in the configuration (as opposed to the
    /// numerics of a run).
    pub fn is_config_error(&self) -> bool {
        match self {
            LabError::Config(_) | LabError::Parse(_) => true,
            LabError::Data(e) => !matches!(
                e,
                DataError::NotClassification | DataError::NoAnalyticOracle
            ),
            LabError::Direct(e) => matches!(
                e,
                DirectError::InvalidK { .. } | DirectError::InvalidExponent(_)
            ),
            LabError::Kernel(e) => matches!(
                e,
                KernelError::InvalidBandwidth(_) | KernelError::InvalidSweep(_)
            ),
            LabError::Net(e) => matches!(e, NetError::InvalidConfig(_) | NetError::TooLarge { .. }),
            LabError::Optim(e) => matches!(e, OptimError::InvalidConfig(_)),
            _ => false,
        }
    }
}

pub(crate) fn config_err<T>(msg: impl Into<String>) -> Result<T, LabError> {
    Err(LabError::Config(msg.into()))
}

/// A named text output of a run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub file_name: String,
    pub contents: String,
}

/// Everything a run produces.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub artifacts: Vec<Artifact>,
    /// Short human-readable result lines.
    pub summary: Vec<String>,
}

/// Header comment identifying the settings behind a CSV.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    /// Hashes the fully resolved parameters, so defaults filled in from the
    /// binary count towards the identity of a run.
    pub fn of<P: Debug>(experiment: Experiment, params: &P, seed: u64) -> Self {
        let digest = Sha256::digest(format!("{}\n{params:?}", experiment.name()).as_bytes());
        let config_hash = digest.iter().map(|b| format!("{b:02x}")).collect();
        Self { config_hash, seed }
    }

    pub fn comment_line(&self) -> String {
        format!(
            "# config_hash={},seed={},version={}",
            self.config_hash,
            self.seed,
            version_tag()
        )
    }
}

pub fn version_tag() -> String {
    format!("{}+fmt{}", env!("CARGO_PKG_VERSION"), FORMAT_VERSION)
}

/// Comment line, header, then one line per row.
pub fn render_csv(prov: &Provenance, header: &str, rows: &[String]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 2));
    out.push_str(&prov.comment_line());
    out.push('\n');
    out.push_str(header);
    out.push('\n');
    for r in rows {
        out.push_str(r);
        out.push('\n');
    }
    out
}

/// Runs the experiment named in the config.
pub fn run(cfg: &ExperimentConfig) -> Result<RunOutput, LabError> {
    let exp = cfg
        .experiment
        .ok_or_else(|| LabError::Config("no experiment selected".into()))?;
    cfg.check_version()?;
    match exp {
        Experiment::NoiseInterp => noise::run_from_config(cfg),
        Experiment::DoubleDescent => double_descent::run_from_config(cfg),
        Experiment::Raisin => raisin::run_from_config(cfg),
        Experiment::LossCompare => loss_compare::run_from_config(cfg),
        Experiment::Simplex => scans::simplex_from_config(cfg),
        Experiment::SgdScaling => scans::sgd_scaling_from_config(cfg),
        Experiment::Linearity => scans::linearity_from_config(cfg),
    }
}

/// Train and test sets drawn under independent seeds. File-backed families
/// are drawn once and split, so the two sets never share a row.
pub(crate) fn train_test(
    spec: &DistributionSpec,
    n_train: usize,
    n_test: usize,
    seeds: (u64, u64),
) -> Result<(Dataset, Dataset), LabError> {
    if let Family::MnistSubset { .. } = spec.family {
        let all = sample(&spec.with_seed(seeds.0), n_train + n_test)?;
        let idx: Vec<usize> = (0..all.len()).collect();
        return Ok((all.subset(&idx[..n_train]), all.subset(&idx[n_train..])));
    }
    Ok((
        sample(&spec.with_seed(seeds.0), n_train)?,
        sample(&spec.with_seed(seeds.1), n_test)?,
    ))
}

/// Configured bandwidth, or the median pairwise training distance.
pub(crate) fn bandwidth_for(configured: Option<f64>, train: &Dataset) -> f64 {
    configured.unwrap_or_else(|| median_pairwise_distance(&train.x, 1000))
}

/// Unit bandwidth for synthetic families; image data defaults to the
/// median heuristic.
pub(crate) fn default_bandwidth(cfg: &ExperimentConfig, spec: &DistributionSpec) -> Option<f64> {
    match spec.family {
        Family::MnistSubset { .. } => cfg.model.bandwidth,
        _ => Some(cfg.model.bandwidth.unwrap_or(1.0)),
    }
}

pub(crate) fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k == 0 {
        f64::NAN
    } else if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

pub(crate) fn sign(v: f64) -> f64 {
    if v >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

pub(crate) fn zero_one_risk(pred: &[f64], y: &[f64]) -> f64 {
    let wrong = pred.iter().zip(y).filter(|(p, t)| sign(**p) != **t).count();
    wrong as f64 / y.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_starts_with_provenance_comment() {
        let prov = Provenance::of(Experiment::Simplex, &(1, 2), 9);
        let text = render_csv(&prov, "a,b", &["1,2".into()]);
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("# config_hash="));
        assert!(lines[0].contains(",seed=9,version="));
        assert_eq!(lines[1], "a,b");
        assert_eq!(lines.len(), 3);
    }

    #[test]
    fn hash_depends_on_params_and_experiment() {
        let a = Provenance::of(Experiment::Simplex, &(1, 2), 0);
        assert_eq!(a, Provenance::of(Experiment::Simplex, &(1, 2), 0));
        assert_ne!(
            a.config_hash,
            Provenance::of(Experiment::Simplex, &(1, 3), 0).config_hash
        );
        assert_ne!(
            a.config_hash,
            Provenance::of(Experiment::Raisin, &(1, 2), 0).config_hash
        );
        assert_eq!(a.config_hash.len(), 64);
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }
}

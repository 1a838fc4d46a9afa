use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::{config_err, LabError};
use crate::datagen::{DistributionSpec, Family};
use crate::kernelmach::{KernelFamily, KernelSpec};
use crate::netmodels::Activation;

/// Config schema version understood by this build.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    NoiseInterp,
    DoubleDescent,
    Raisin,
    LossCompare,
    Simplex,
    SgdScaling,
    Linearity,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Experiment::NoiseInterp,
        Experiment::DoubleDescent,
        Experiment::Raisin,
        Experiment::LossCompare,
        Experiment::Simplex,
        Experiment::SgdScaling,
        Experiment::Linearity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::NoiseInterp => "noise-interp",
            Experiment::DoubleDescent => "double-descent",
            Experiment::Raisin => "raisin",
            Experiment::LossCompare => "loss-compare",
            Experiment::Simplex => "simplex",
            Experiment::SgdScaling => "sgd-scaling",
            Experiment::Linearity => "linearity",
        }
    }
}

/// A run description, read from TOML.
///
/// Every field is optional; experiments fill in their own defaults. Keys may
/// be written flat with dotted prefixes (`data.dim = 5`) or as sections.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: Option<u32>,
    pub experiment: Option<Experiment>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub sweep: SweepGrid,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// `two_gaussians`, `uniform_simplex`, `noisy_line` or `mnist`.
    pub family: Option<String>,
    pub dim: Option<usize>,
    pub separation: Option<f64>,
    pub scale: Option<f64>,
    pub slope: Option<f64>,
    pub noise_sd: Option<f64>,
    pub images: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub classes: Option<[u8; 2]>,
    pub n_train: Option<usize>,
    pub n_test: Option<usize>,
    /// Label-corruption level for single-level experiments.
    pub q: Option<f64>,
    /// Variance of the leading feature in the spiked regression problem.
    pub spike: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// `laplace` or `gaussian`.
    pub kernel: Option<String>,
    pub kernels: Option<Vec<String>>,
    pub bandwidth: Option<f64>,
    /// `kernel` or `knn` (raisin search).
    pub predictor: Option<String>,
    pub hidden: Option<Vec<usize>>,
    pub depth: Option<usize>,
    /// `tanh`, `softplus` or `identity`.
    pub activation: Option<String>,
    pub output_wrap: Option<String>,
    pub step: Option<f64>,
    pub iters: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepGrid {
    pub q: Option<Vec<f64>>,
    pub m: Option<Vec<usize>>,
    pub n: Option<Vec<usize>>,
    pub d: Option<Vec<usize>>,
    pub batch: Option<Vec<usize>>,
    pub widths: Option<Vec<usize>>,
    /// Number of replicates.
    pub seeds: Option<usize>,
    pub draws: Option<usize>,
    pub queries: Option<usize>,
    pub random_dirs: Option<usize>,
    pub probes: Option<usize>,
    pub radius: Option<f64>,
    pub target_rel: Option<f64>,
    pub max_iters: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, LabError> {
        Ok(toml::from_str(text)?)
    }

    pub fn for_experiment(exp: Experiment) -> Self {
        Self {
            experiment: Some(exp),
            ..Self::default()
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn check_version(&self) -> Result<(), LabError> {
        match self.version {
            None => Ok(()),
            Some(v) if v == FORMAT_VERSION => Ok(()),
            Some(v) => config_err(format!(
                "config version {v} unsupported (this build reads {FORMAT_VERSION})"
            )),
        }
    }
}

impl DataConfig {
    /// The configured family, with fields not given in the config taken
    /// from `default` when it is of the same kind.
    pub fn family_or(&self, default: &Family) -> Result<Family, LabError> {
        let default_name = match default {
            Family::TwoGaussians { .. } => "two_gaussians",
            Family::UniformSimplex { .. } => "uniform_simplex",
            Family::NoisyLine { .. } => "noisy_line",
            Family::MnistSubset { .. } => "mnist",
        };
        let name = self.family.as_deref().unwrap_or(default_name);
        Ok(match name {
            "two_gaussians" => {
                let (dim, separation, scale) = match default {
                    Family::TwoGaussians {
                        dim,
                        separation,
                        scale,
                    } => (*dim, *separation, *scale),
                    _ => (2, 2.0, 1.0),
                };
                Family::TwoGaussians {
                    dim: self.dim.unwrap_or(dim),
                    separation: self.separation.unwrap_or(separation),
                    scale: self.scale.unwrap_or(scale),
                }
            }
            "uniform_simplex" => Family::UniformSimplex {
                dim: self.dim.unwrap_or(2),
            },
            "noisy_line" => Family::NoisyLine {
                slope: self.slope.unwrap_or(1.0),
                noise_sd: self.noise_sd.unwrap_or(0.1),
            },
            "mnist" => match (&self.images, &self.labels) {
                (Some(images), Some(labels)) => Family::MnistSubset {
                    images: images.clone(),
                    labels: labels.clone(),
                    classes: self.classes.unwrap_or([0, 1]),
                },
                _ => {
                    return config_err("data.family = \"mnist\" needs data.images and data.labels")
                }
            },
            other => return config_err(format!("unknown data.family {other:?}")),
        })
    }

    pub fn distribution_or(
        &self,
        default: &Family,
        seed: u64,
    ) -> Result<DistributionSpec, LabError> {
        Ok(DistributionSpec::new(self.family_or(default)?, seed)?)
    }
}

impl ModelConfig {
    pub fn kernels_or(&self, default: &[KernelFamily]) -> Result<Vec<KernelFamily>, LabError> {
        let names: Vec<&str> = match (&self.kernels, &self.kernel) {
            (Some(list), _) => list.iter().map(String::as_str).collect(),
            (None, Some(k)) => vec![k.as_str()],
            (None, None) => return Ok(default.to_vec()),
        };
        if names.is_empty() {
            return config_err("model.kernels is empty");
        }
        names.into_iter().map(parse_kernel).collect()
    }

    pub fn kernel_spec_or(
        &self,
        family: KernelFamily,
        bandwidth: f64,
    ) -> Result<KernelSpec, LabError> {
        let family = match &self.kernel {
            Some(k) => parse_kernel(k)?,
            None => family,
        };
        Ok(KernelSpec::new(
            family,
            self.bandwidth.unwrap_or(bandwidth),
        )?)
    }

    pub fn activation_or(&self, default: Activation) -> Result<Activation, LabError> {
        self.activation
            .as_deref()
            .map_or(Ok(default), parse_activation)
    }

    pub fn output_wrap(&self) -> Result<Option<Activation>, LabError> {
        match self.output_wrap.as_deref() {
            None | Some("none") => Ok(None),
            Some(a) => parse_activation(a).map(Some),
        }
    }
}

fn parse_kernel(name: &str) -> Result<KernelFamily, LabError> {
    match name {
        "laplace" => Ok(KernelFamily::Laplace),
        "gaussian" => Ok(KernelFamily::Gaussian),
        other => config_err(format!(
            "unknown kernel {other:?} (expected laplace or gaussian)"
        )),
    }
}

fn parse_activation(name: &str) -> Result<Activation, LabError> {
    match name {
        "tanh" => Ok(Activation::Tanh),
        "softplus" => Ok(Activation::Softplus),
        "identity" => Ok(Activation::Identity),
        other => config_err(format!("unknown activation {other:?}")),
    }
}

/// `Some(v)` if positive, else a config error naming `key`.
pub(crate) fn positive(key: &str, v: usize) -> Result<usize, LabError> {
    if v == 0 {
        config_err(format!("{key} must be at least 1"))
    } else {
        Ok(v)
    }
}

pub(crate) fn check_unit_interval(key: &str, q: f64) -> Result<f64, LabError> {
    if (0.0..=1.0).contains(&q) {
        Ok(q)
    } else {
        config_err(format!("{key} = {q} outside [0, 1]"))
    }
}

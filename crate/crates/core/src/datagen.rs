//! Synthetic data distributions with analytic Bayes oracles, label-noise
//! corruption, and MNIST-format IDX ingestion.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use statrs::function::erf::erfc;
use thiserror::Error;

use crate::numlin::Matrix;
use crate::rng::{substream, tag};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid distribution spec: {0}")]
    InvalidSpec(String),
    #[error("operation requires a classification dataset")]
    NotClassification,
    #[error("no analytic Bayes oracle for this family")]
    NoAnalyticOracle,
    #[error("bad IDX magic number: expected {expected:#010x}, found {found:#010x}")]
    BadMagic { expected: u32, found: u32 },
    #[error("truncated IDX data: {0}")]
    TruncatedFile(String),
    #[error("class {0} does not occur in the label file")]
    UnknownClass(u8),
    #[error("labels must be -1 or +1 for classification (found {0})")]
    BadLabel(f64),
    #[error("{rows} rows but {labels} labels")]
    LengthMismatch { rows: usize, labels: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Classification,
    Regression,
}

/// Inputs (one row per example) and labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Vec<f64>,
    pub task: Task,
}

impl Dataset {
    pub fn new(x: Matrix, y: Vec<f64>, task: Task) -> Result<Self, DataError> {
        if x.rows() != y.len() {
            return Err(DataError::LengthMismatch {
                rows: x.rows(),
                labels: y.len(),
            });
        }
        if task == Task::Classification {
            if let Some(&bad) = y.iter().find(|&&v| v != 1.0 && v != -1.0) {
                return Err(DataError::BadLabel(bad));
            }
        }
        Ok(Self { x, y, task })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            task: self.task,
        }
    }

    /// Drops exact duplicate input rows (keeping the first occurrence) and
    /// returns how many were removed.
    pub fn dedup(&mut self) -> usize {
        let mut seen = HashSet::with_capacity(self.len());
        let keep: Vec<usize> = (0..self.len())
            .filter(|&i| seen.insert(row_key(self.x.row(i))))
            .collect();
        let dropped = self.len() - keep.len();
        if dropped > 0 {
            *self = self.subset(&keep);
        }
        dropped
    }
}

fn row_key(row: &[f64]) -> Vec<u64> {
    // +0.0 and -0.0 are the same point.
    row.iter().map(|v| (v + 0.0).to_bits()).collect()
}

/// The synthetic (or file-backed) families data can be drawn from.
#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    /// Balanced classes `±1` with means `±(separation/2)·e₁` and isotropic
    /// covariance `scale²·I`.
    TwoGaussians {
        dim: usize,
        separation: f64,
        scale: f64,
    },
    /// Uniform on the standard `dim`-simplex, every label `+1`.
    UniformSimplex { dim: usize },
    /// `x ~ U[0,1]`, `y = slope·x + N(0, noise_sd²)`.
    NoisyLine { slope: f64, noise_sd: f64 },
    /// Two digit classes read from IDX files.
    MnistSubset {
        images: PathBuf,
        labels: PathBuf,
        classes: [u8; 2],
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistributionSpec {
    pub family: Family,
    pub seed: u64,
}

impl DistributionSpec {
    pub fn new(family: Family, seed: u64) -> Result<Self, DataError> {
        let spec = Self { family, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            family: self.family.clone(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: &str| Err(DataError::InvalidSpec(m.to_string()));
        match &self.family {
            Family::TwoGaussians {
                dim,
                separation,
                scale,
            } => {
                if *dim == 0 {
                    return bad("two_gaussians: dim must be at least 1");
                }
                if !(separation.is_finite() && *separation >= 0.0) {
                    return bad("two_gaussians: separation must be finite and nonnegative");
                }
                if !(scale.is_finite() && *scale > 0.0) {
                    return bad("two_gaussians: scale must be positive");
                }
            }
            Family::UniformSimplex { dim } => {
                if *dim == 0 {
                    return bad("uniform_simplex: dim must be at least 1");
                }
            }
            Family::NoisyLine { slope, noise_sd } => {
                if !slope.is_finite() || !(noise_sd.is_finite() && *noise_sd >= 0.0) {
                    return bad("noisy_line: slope must be finite and noise_sd nonnegative");
                }
            }
            Family::MnistSubset { classes, .. } => {
                if classes[0] == classes[1] || classes.iter().any(|&c| c > 9) {
                    return bad("mnist_subset: need two distinct digit classes");
                }
            }
        }
        Ok(())
    }

    pub fn task(&self) -> Task {
        match self.family {
            Family::NoisyLine { .. } => Task::Regression,
            _ => Task::Classification,
        }
    }

    /// Prediction of the Bayes-optimal rule at `x`: a class label for
    /// classification families, the regression function for `NoisyLine`.
    pub fn bayes_predict(&self, x: &[f64]) -> Option<f64> {
        match &self.family {
            Family::TwoGaussians { .. } => Some(if x[0] >= 0.0 { 1.0 } else { -1.0 }),
            Family::UniformSimplex { .. } => Some(1.0),
            Family::NoisyLine { slope, .. } => Some(slope * x[0]),
            Family::MnistSubset { .. } => None,
        }
    }
}

/// Draws `n` iid examples. Deterministic in `spec.seed`.
pub fn sample(spec: &DistributionSpec, n: usize) -> Result<Dataset, DataError> {
    spec.validate()?;
    if n == 0 {
        return Err(DataError::InvalidSpec(
            "sample size must be at least 1".into(),
        ));
    }
    let mut rng = substream(spec.seed, &[tag::SAMPLE]);
    match &spec.family {
        Family::TwoGaussians {
            dim,
            separation,
            scale,
        } => {
            let mut x = Matrix::zeros(n, *dim);
            let mut y = Vec::with_capacity(n);
            for i in 0..n {
                let label = if rng.random::<bool>() { 1.0 } else { -1.0 };
                for (j, v) in x.row_mut(i).iter_mut().enumerate() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *v = scale * z
                        + if j == 0 {
                            label * separation / 2.0
                        } else {
                            0.0
                        };
                }
                y.push(label);
            }
            Dataset::new(x, y, Task::Classification)
        }
        Family::UniformSimplex { dim } => {
            let mut x = Matrix::zeros(n, *dim);
            for i in 0..n {
                // Normalized exponential spacings are uniform on the simplex.
                let e: Vec<f64> = (0..=*dim).map(|_| Exp1.sample(&mut rng)).collect();
                let total: f64 = e.iter().sum();
                for (v, ej) in x.row_mut(i).iter_mut().zip(&e) {
                    *v = ej / total;
                }
            }
            Dataset::new(x, vec![1.0; n], Task::Classification)
        }
        Family::NoisyLine { slope, noise_sd } => {
            let mut xs = Vec::with_capacity(n);
            let mut ys = Vec::with_capacity(n);
            for _ in 0..n {
                let x: f64 = rng.random();
                let eps: f64 = StandardNormal.sample(&mut rng);
                xs.push(x);
                ys.push(slope * x + noise_sd * eps);
            }
            Dataset::new(Matrix::new(n, 1, xs).expect("finite"), ys, Task::Regression)
        }
        Family::MnistSubset {
            images,
            labels,
            classes,
        } => load_idx(images, labels, classes, n, spec.seed),
    }
}

/// Label noise: each label is replaced by a fair `±1` coin with
/// probability `q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorruptionSpec {
    pub q: f64,
    pub seed: u64,
}

impl CorruptionSpec {
    pub fn new(q: f64, seed: u64) -> Result<Self, DataError> {
        if !(0.0..=1.0).contains(&q) {
            return Err(DataError::InvalidSpec(format!(
                "corruption level {q} not in [0, 1]"
            )));
        }
        Ok(Self { q, seed })
    }
}

pub fn corrupt(ds: &Dataset, c: &CorruptionSpec) -> Result<Dataset, DataError> {
    if ds.task != Task::Classification {
        return Err(DataError::NotClassification);
    }
    if !(0.0..=1.0).contains(&c.q) {
        return Err(DataError::InvalidSpec(format!(
            "corruption level {} not in [0, 1]",
            c.q
        )));
    }
    let mut rng = substream(c.seed, &[tag::CORRUPT]);
    let y =
        ds.y.iter()
            .map(|&yi| {
                // Both draws are always taken so the stream layout does not depend on q.
                let u: f64 = rng.random();
                let coin = if rng.random::<bool>() { 1.0 } else { -1.0 };
                if u < c.q {
                    coin
                } else {
                    yi
                }
            })
            .collect();
    Ok(Dataset {
        x: ds.x.clone(),
        y,
        task: ds.task,
    })
}

/// Clean Bayes 0-1 risk `R*_P` of a classification family.
pub fn clean_bayes_risk(spec: &DistributionSpec) -> Result<f64, DataError> {
    match &spec.family {
        Family::TwoGaussians {
            separation, scale, ..
        } => Ok(std_normal_cdf(-separation / (2.0 * scale))),
        Family::UniformSimplex { .. } => Ok(0.0),
        Family::NoisyLine { .. } => Err(DataError::NotClassification),
        Family::MnistSubset { .. } => Err(DataError::NoAnalyticOracle),
    }
}

/// Bayes 0-1 risk under `q`-corruption: `q/2 + (1 − q)·R*_P`.
///
/// For `NoisyLine` (a regression family) only `q = 0` is meaningful and the
/// square-loss Bayes risk `noise_sd²` is returned.
pub fn bayes_risk(spec: &DistributionSpec, q: f64) -> Result<f64, DataError> {
    if !(0.0..=1.0).contains(&q) {
        return Err(DataError::InvalidSpec(format!(
            "corruption level {q} not in [0, 1]"
        )));
    }
    if let Family::NoisyLine { noise_sd, .. } = spec.family {
        return if q == 0.0 {
            Ok(noise_sd * noise_sd)
        } else {
            Err(DataError::NotClassification)
        };
    }
    let clean = clean_bayes_risk(spec)?;
    Ok(q / 2.0 + (1.0 - q) * clean)
}

pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

/// Reads an IDX image/label file pair and keeps two digit classes.
///
/// Pixels are scaled to `[0, 1]`; the first class maps to `-1`, the second
/// to `+1`. Exact duplicate images are dropped, then `n` rows are drawn
/// without replacement (seeded) and returned in file order.
pub fn load_idx(
    images_path: &Path,
    labels_path: &Path,
    classes: &[u8],
    n: usize,
    seed: u64,
) -> Result<Dataset, DataError> {
    if classes.len() != 2 || classes[0] == classes[1] {
        return Err(DataError::InvalidSpec(
            "need exactly two distinct classes".into(),
        ));
    }
    let images = fs::read(images_path)?;
    let labels = fs::read(labels_path)?;
    let (count, dims, pixels) = parse_idx(&images, IMAGES_MAGIC, 3)?;
    let (label_count, _, label_bytes) = parse_idx(&labels, LABELS_MAGIC, 1)?;
    if label_count != count {
        return Err(DataError::TruncatedFile(format!(
            "{count} images but {label_count} labels"
        )));
    }
    let d = dims[1] * dims[2];
    for &c in classes {
        if !label_bytes.contains(&c) {
            return Err(DataError::UnknownClass(c));
        }
    }
    let chosen: Vec<usize> = (0..count)
        .filter(|&i| classes.contains(&label_bytes[i]))
        .collect();
    let x = Matrix::from_fn(chosen.len(), d, |r, j| {
        pixels[chosen[r] * d + j] as f64 / 255.0
    });
    let y = chosen
        .iter()
        .map(|&i| {
            if label_bytes[i] == classes[0] {
                -1.0
            } else {
                1.0
            }
        })
        .collect();
    let mut ds = Dataset::new(x, y, Task::Classification)?;
    ds.dedup();
    if ds.len() < n {
        return Err(DataError::TruncatedFile(format!(
            "requested {n} rows but only {} distinct rows of classes {classes:?} are available",
            ds.len()
        )));
    }
    let mut idx: Vec<usize> = (0..ds.len()).collect();
    idx.shuffle(&mut substream(seed, &[tag::SUBSAMPLE]));
    idx.truncate(n);
    idx.sort_unstable();
    Ok(ds.subset(&idx))
}

/// Returns (item count, all dims, payload).
fn parse_idx(
    bytes: &[u8],
    magic: u32,
    ndims: usize,
) -> Result<(usize, Vec<usize>, &[u8]), DataError> {
    let word = |k: usize| -> Result<u32, DataError> {
        bytes
            .get(4 * k..4 * k + 4)
            .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
            .ok_or_else(|| DataError::TruncatedFile("header too short".into()))
    };
    let found = word(0)?;
    if found != magic {
        return Err(DataError::BadMagic {
            expected: magic,
            found,
        });
    }
    let dims: Vec<usize> = (1..=ndims)
        .map(|k| word(k).map(|v| v as usize))
        .collect::<Result<_, _>>()?;
    let header = 4 * (ndims + 1);
    let expected: usize = dims.iter().product();
    let payload = &bytes[header.min(bytes.len())..];
    if payload.len() < expected {
        return Err(DataError::TruncatedFile(format!(
            "expected {expected} data bytes, found {}",
            payload.len()
        )));
    }
    Ok((dims[0], dims, &payload[..expected]))
}

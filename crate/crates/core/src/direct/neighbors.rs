use super::{sign_or, DirectError};
use crate::datagen::{Dataset, Task};
use crate::numlin::sq_dist;

/// Distance below which a query is treated as sitting on a training point.
const COINCIDENT: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Weighting {
    Uniform,
    /// Weights `‖x − xᵢ‖^(−alpha)`.
    Singular {
        alpha: f64,
    },
}

impl Weighting {
    /// Singular weights with the exponent equal to the input dimension.
    pub fn singular_for_dim(dim: usize) -> Self {
        Weighting::Singular { alpha: dim as f64 }
    }
}

/// Brute-force k-nearest-neighbour predictor, optionally with singular
/// (interpolating) weights.
#[derive(Debug, Clone)]
pub struct NeighborPredictor {
    train: Dataset,
    k: usize,
    weighting: Weighting,
}

impl NeighborPredictor {
    pub fn new(train: Dataset, k: usize, weighting: Weighting) -> Result<Self, DirectError> {
        if train.is_empty() {
            return Err(DirectError::EmptyTrainingSet);
        }
        if k == 0 || k > train.len() {
            return Err(DirectError::InvalidK { k, n: train.len() });
        }
        if let Weighting::Singular { alpha } = weighting {
            if !(alpha > 0.0 && alpha.is_finite()) {
                return Err(DirectError::InvalidExponent(alpha));
            }
        }
        Ok(Self {
            train,
            k,
            weighting,
        })
    }

    pub fn one_nn(train: Dataset) -> Result<Self, DirectError> {
        Self::new(train, 1, Weighting::Uniform)
    }

    pub fn train(&self) -> &Dataset {
        &self.train
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Indices and distances of the `k` nearest training points, closest
    /// first; equal distances are ordered by index.
    pub fn nearest(&self, x: &[f64], k: usize) -> Result<Vec<(usize, f64)>, DirectError> {
        if x.len() != self.train.dim() {
            return Err(DirectError::DimensionMismatch {
                expected: self.train.dim(),
                found: x.len(),
            });
        }
        let mut d: Vec<(f64, usize)> = self
            .train
            .x
            .row_iter()
            .enumerate()
            .map(|(i, r)| (sq_dist(r, x), i))
            .collect();
        let k = k.min(d.len());
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < d.len() {
            d.select_nth_unstable_by(k, cmp);
            d.truncate(k);
        }
        d.sort_unstable_by(cmp);
        Ok(d.into_iter().map(|(s, i)| (i, s.sqrt())).collect())
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64, DirectError> {
        let nn = self.nearest(x, self.k)?;
        let y = &self.train.y;
        let nearest_label = y[nn[0].0];
        let value = match self.weighting {
            Weighting::Uniform => nn.iter().map(|&(i, _)| y[i]).sum::<f64>() / nn.len() as f64,
            Weighting::Singular { alpha } => {
                let d0 = nn[0].1;
                if d0 < COINCIDENT {
                    return Ok(nearest_label);
                }
                // weights relative to the nearest neighbour avoid overflow
                let (num, den) = nn.iter().fold((0.0, 0.0), |(num, den), &(i, d)| {
                    let w = (-alpha * (d / d0).ln()).exp();
                    (num + w * y[i], den + w)
                });
                num / den
            }
        };
        Ok(match self.train.task {
            Task::Classification => sign_or(value, nearest_label),
            Task::Regression => value,
        })
    }
}

pub fn knn_predict(p: &NeighborPredictor, x: &[f64]) -> Result<f64, DirectError> {
    p.predict(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{sample, DistributionSpec, Family};
    use crate::numlin::Matrix;

    fn regression(xs: &[f64], ys: &[f64]) -> Dataset {
        Dataset::new(
            Matrix::new(xs.len(), 1, xs.to_vec()).unwrap(),
            ys.to_vec(),
            Task::Regression,
        )
        .unwrap()
    }

    #[test]
    fn one_nn_interpolates() {
        let spec = DistributionSpec::new(
            Family::TwoGaussians {
                dim: 3,
                separation: 1.0,
                scale: 1.0,
            },
            4,
        )
        .unwrap();
        let ds = sample(&spec, 100).unwrap();
        let p = NeighborPredictor::one_nn(ds.clone()).unwrap();
        for (r, &y) in ds.x.row_iter().zip(&ds.y) {
            assert_eq!(p.predict(r).unwrap(), y);
        }
    }

    #[test]
    fn singular_equidistant_pair_averages() {
        let ds = regression(&[-1.0, 1.0], &[0.0, 2.0]);
        let p = NeighborPredictor::new(ds, 2, Weighting::Singular { alpha: 3.0 }).unwrap();
        assert_eq!(p.predict(&[0.0]).unwrap(), 1.0);
    }

    #[test]
    fn singular_interpolates_and_is_continuous() {
        let spec = DistributionSpec::new(
            Family::NoisyLine {
                slope: 1.0,
                noise_sd: 0.25,
            },
            7,
        )
        .unwrap();
        let ds = sample(&spec, 200).unwrap();
        let p = NeighborPredictor::new(ds.clone(), 10, Weighting::Singular { alpha: 3.0 }).unwrap();
        for (r, &y) in ds.x.row_iter().zip(&ds.y) {
            assert_eq!(p.predict(r).unwrap(), y);
        }
        // continuity away from training points
        let xs = ds.x.column(0);
        for k in 0..50 {
            let q = 0.01 + 0.98 * k as f64 / 49.0;
            let gap = xs
                .iter()
                .map(|x| (x - q).abs())
                .fold(f64::INFINITY, f64::min);
            if gap < 1e-4 {
                continue;
            }
            let a = p.predict(&[q]).unwrap();
            let b = p.predict(&[q + 1e-6]).unwrap();
            assert!((a - b).abs() < 1e-3, "jump at {q}: {a} vs {b}");
        }
    }

    #[test]
    fn ties_prefer_lowest_index() {
        let ds = regression(&[1.0, -1.0, 3.0], &[5.0, 7.0, 9.0]);
        let p = NeighborPredictor::one_nn(ds).unwrap();
        assert_eq!(p.nearest(&[0.0], 2).unwrap()[0].0, 0);
        assert_eq!(p.predict(&[0.0]).unwrap(), 5.0);
    }

    #[test]
    fn classification_uses_sign_with_nearest_tie_break() {
        let x = Matrix::from_rows(&[[0.0], [1.0], [3.0], [4.0]]);
        let ds = Dataset::new(x, vec![1.0, -1.0, 1.0, -1.0], Task::Classification).unwrap();
        let p = NeighborPredictor::new(ds, 2, Weighting::Uniform).unwrap();
        assert_eq!(p.predict(&[0.2]).unwrap(), 1.0);
        assert_eq!(p.predict(&[0.9]).unwrap(), -1.0);
    }

    #[test]
    fn errors() {
        let empty = Dataset::new(Matrix::zeros(0, 1), vec![], Task::Regression).unwrap();
        assert_eq!(
            NeighborPredictor::one_nn(empty).unwrap_err(),
            DirectError::EmptyTrainingSet
        );
        let ds = regression(&[0.0, 1.0], &[0.0, 1.0]);
        assert!(matches!(
            NeighborPredictor::new(ds.clone(), 3, Weighting::Uniform),
            Err(DirectError::InvalidK { .. })
        ));
        assert!(NeighborPredictor::new(ds.clone(), 1, Weighting::Singular { alpha: 0.0 }).is_err());
        let p = NeighborPredictor::one_nn(ds).unwrap();
        assert!(matches!(
            p.predict(&[0.0, 1.0]),
            Err(DirectError::DimensionMismatch { .. })
        ));
    }
}

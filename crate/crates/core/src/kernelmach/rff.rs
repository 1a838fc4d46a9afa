use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::KernelError;
use crate::datagen::Dataset;
use crate::numlin::{dot, norm, svd, Matrix, DEFAULT_RANK_TOL};
use crate::rng::{substream, tag};

/// `m×d` frequency matrix with iid `N(0, 1/b²)` entries, so that the
/// features approximate the gaussian kernel of bandwidth `b`.
pub fn rff_frequencies(m: usize, dim: usize, bandwidth: f64, seed: u64, path: &[u64]) -> Matrix {
    let mut full = vec![tag::FEATURES];
    full.extend_from_slice(path);
    let mut rng = substream(seed, &full);
    Matrix::from_fn(m, dim, |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        z / bandwidth
    })
}

/// Real embedding of the complex feature map: row `i` holds
/// `(cos θᵢₖ, −sin θᵢₖ)/√m` for `k = 0..m`, with `θᵢₖ = ⟨vₖ, xᵢ⟩`.
///
/// With `w` interleaved as `(Re wₖ, Im wₖ)` this row dotted with `w` is
/// `Re Σ wₖ e^{iθᵢₖ} / √m`.
pub fn rff_features(v: &Matrix, x: &Matrix) -> Result<Matrix, KernelError> {
    if v.cols() != x.cols() {
        return Err(KernelError::DimensionMismatch {
            expected: v.cols(),
            found: x.cols(),
        });
    }
    let m = v.rows();
    let scale = 1.0 / (m as f64).sqrt();
    let mut data = vec![0.0; x.rows() * 2 * m];
    data.par_chunks_mut((2 * m).max(1))
        .enumerate()
        .for_each(|(i, row)| {
            let xi = x.row(i);
            for k in 0..m {
                let (s, c) = dot(v.row(k), xi).sin_cos();
                row[2 * k] = c * scale;
                row[2 * k + 1] = -s * scale;
            }
        });
    Ok(Matrix::new(x.rows(), 2 * m, data)?)
}

/// Random Fourier feature model with frozen frequencies and complex
/// coefficients stored as interleaved `(re, im)` pairs.
#[derive(Debug, Clone)]
pub struct RffModel {
    pub v: Matrix,
    pub w: Vec<f64>,
    /// Condition number of the retained part of the feature matrix.
    pub condition_number: f64,
}

impl RffModel {
    pub fn m(&self) -> usize {
        self.v.rows()
    }

    pub fn coefficient(&self, k: usize) -> (f64, f64) {
        (self.w[2 * k], self.w[2 * k + 1])
    }

    /// Euclidean norm of the complex coefficient vector.
    pub fn coeff_norm(&self) -> f64 {
        norm(&self.w)
    }

    pub fn predict_batch(&self, x: &Matrix) -> Result<Vec<f64>, KernelError> {
        Ok(rff_features(&self.v, x)?.matvec(&self.w)?)
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64, KernelError> {
        let row = Matrix::new(1, x.len(), x.to_vec())?;
        Ok(self.predict_batch(&row)?[0])
    }
}

/// Minimum-norm complex coefficients `w = Φ†y` for the real part of the
/// feature model; the least-squares solution when no exact fit exists.
pub fn rff_fit_minnorm(v: &Matrix, ds: &Dataset) -> Result<RffModel, KernelError> {
    if ds.is_empty() {
        return Err(KernelError::EmptyTrainingSet);
    }
    if v.rows() == 0 {
        return Err(KernelError::InvalidSweep(
            "feature count must be at least 1".into(),
        ));
    }
    let phi = rff_features(v, &ds.x)?;
    let dec = svd(&phi)?;
    let w = dec.solve_min_norm(&ds.y, DEFAULT_RANK_TOL)?;
    Ok(RffModel {
        v: v.clone(),
        w,
        condition_number: dec.condition_number(DEFAULT_RANK_TOL),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{sample, DistributionSpec, Family, Task};
    use crate::kernelmach::{fit_interpolating, rkhs_norm_sq, KernelSpec};
    use proptest::prelude::*;
    use rand::Rng;

    fn data(n: usize, dim: usize, seed: u64) -> Dataset {
        let spec = DistributionSpec::new(
            Family::TwoGaussians {
                dim,
                separation: 2.0,
                scale: 1.0,
            },
            seed,
        )
        .unwrap();
        sample(&spec, n).unwrap()
    }

    #[test]
    fn single_constraint_aligns_phase() {
        let v = Matrix::from_rows(&[[0.8, -1.1]]);
        let x = Matrix::from_rows(&[[0.4, 0.9]]);
        let ds = Dataset::new(x.clone(), vec![-2.5], Task::Regression).unwrap();
        let model = rff_fit_minnorm(&v, &ds).unwrap();
        let theta = dot(v.row(0), x.row(0));
        // w = y·e^{−iθ}
        let (re, im) = model.coefficient(0);
        assert!((re - -2.5 * theta.cos()).abs() < 1e-12);
        assert!((im - 2.5 * theta.sin()).abs() < 1e-12);
        assert!((model.coeff_norm() - 2.5).abs() < 1e-12);
        assert!((model.predict(x.row(0)).unwrap() + 2.5).abs() < 1e-12);
    }

    #[test]
    fn features_match_complex_definition() {
        let v = rff_frequencies(3, 2, 1.0, 1, &[]);
        let x = Matrix::from_rows(&[[0.3, -0.2]]);
        let phi = rff_features(&v, &x).unwrap();
        let w = [0.5, -1.0, 2.0, 0.25, -0.75, 1.5];
        let mut re = 0.0;
        for k in 0..3 {
            let th = dot(v.row(k), x.row(0));
            // Re((a + ib)(cos θ + i sin θ)) = a cos θ − b sin θ
            re += w[2 * k] * th.cos() - w[2 * k + 1] * th.sin();
        }
        assert!((dot(phi.row(0), &w) - re / 3f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn overparameterized_fit_interpolates() {
        let ds = data(60, 3, 8);
        let v = rff_frequencies(200, 3, 1.0, 8, &[]);
        let model = rff_fit_minnorm(&v, &ds).unwrap();
        for (p, y) in model.predict_batch(&ds.x).unwrap().iter().zip(&ds.y) {
            assert!((p - y).abs() < 1e-6);
        }
    }

    #[test]
    fn underparameterized_fit_is_least_squares() {
        let ds = data(50, 2, 2);
        let v = rff_frequencies(5, 2, 1.0, 2, &[]);
        let model = rff_fit_minnorm(&v, &ds).unwrap();
        let phi = rff_features(&v, &ds.x).unwrap();
        let r: Vec<f64> = phi
            .matvec(&model.w)
            .unwrap()
            .iter()
            .zip(&ds.y)
            .map(|(f, y)| f - y)
            .collect();
        // normal equations Φᵀr = 0
        let g = phi.tr_matvec(&r).unwrap();
        assert!(norm(&g) < 1e-9 * (1.0 + norm(&ds.y)));
    }

    #[test]
    fn norm_approaches_gaussian_rkhs_norm() {
        let ds = data(15, 2, 21);
        let km = fit_interpolating(&KernelSpec::gaussian(1.0).unwrap(), &ds).unwrap();
        let target = rkhs_norm_sq(&km);
        let mean_gap = |m: usize| -> f64 {
            (0..8)
                .map(|rep| {
                    let v = rff_frequencies(m, 2, 1.0, 99, &[rep]);
                    let n2 = rff_fit_minnorm(&v, &ds).unwrap().coeff_norm().powi(2);
                    (n2 - target).abs()
                })
                .sum::<f64>()
                / 8.0
        };
        let (near, mid, far) = (mean_gap(2 * 15), mean_gap(5 * 15), mean_gap(20 * 15));
        assert!(
            near > mid && mid > far,
            "{near} {mid} {far} target {target}"
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn minimum_norm_is_orthogonal_to_null_space(seed in 0u64..1000, n in 3usize..25, extra in 2usize..30) {
            let ds = data(n, 2, seed);
            let m = n + extra;
            let v = rff_frequencies(m, 2, 1.0, seed, &[]);
            let model = rff_fit_minnorm(&v, &ds).unwrap();
            let phi = rff_features(&v, &ds.x).unwrap();
            let dec = svd(&phi).unwrap();
            let r = dec.rank(DEFAULT_RANK_TOL);
            let mut rng = substream(seed, &[tag::PERTURB]);
            let mut delta: Vec<f64> = (0..2 * m).map(|_| rng.random_range(-1.0..1.0)).collect();
            // project out the row space spanned by the leading right singular vectors
            for k in 0..r {
                let vk = dec.v.column(k);
                let c = dot(&vk, &delta);
                delta.iter_mut().zip(&vk).for_each(|(d, v)| *d -= c * v);
            }
            prop_assert!(norm(&phi.matvec(&delta).unwrap()) < 1e-8);
            let w = &model.w;
            let wd: Vec<f64> = w.iter().zip(&delta).map(|(a, b)| a + b).collect();
            let lhs = dot(w, w) + dot(&delta, &delta);
            prop_assert!((lhs - dot(&wd, &wd)).abs() <= 1e-8 * lhs.max(1.0));
            prop_assert!(norm(&wd) >= norm(w));
        }
    }
}

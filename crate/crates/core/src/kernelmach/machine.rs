use rayon::prelude::*;

use super::KernelError;
use crate::datagen::Dataset;
use crate::numlin::{dot, sq_dist, Cholesky, LinalgError, Matrix};

/// Diagonal jitter tried in order until the interpolation residual is
/// within tolerance.
pub const JITTER_LADDER: [f64; 4] = [0.0, 1e-12, 1e-10, 1e-8];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelFamily {
    /// `exp(−‖x−z‖²/(2b²))`
    Gaussian,
    /// `exp(−‖x−z‖/b)`
    Laplace,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    family: KernelFamily,
    bandwidth: f64,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, bandwidth: f64) -> Result<Self, KernelError> {
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(KernelError::InvalidBandwidth(bandwidth));
        }
        Ok(Self { family, bandwidth })
    }

    pub fn gaussian(bandwidth: f64) -> Result<Self, KernelError> {
        Self::new(KernelFamily::Gaussian, bandwidth)
    }

    pub fn laplace(bandwidth: f64) -> Result<Self, KernelError> {
        Self::new(KernelFamily::Laplace, bandwidth)
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    /// Kernel value from a squared distance.
    #[inline]
    pub fn from_sq_dist(&self, d2: f64) -> f64 {
        match self.family {
            KernelFamily::Gaussian => (-d2 / (2.0 * self.bandwidth * self.bandwidth)).exp(),
            KernelFamily::Laplace => (-d2.sqrt() / self.bandwidth).exp(),
        }
    }
}

pub fn kernel_eval(k: &KernelSpec, x: &[f64], z: &[f64]) -> Result<f64, KernelError> {
    if x.len() != z.len() {
        return Err(KernelError::DimensionMismatch {
            expected: x.len(),
            found: z.len(),
        });
    }
    Ok(k.from_sq_dist(sq_dist(x, z)))
}

/// Symmetric Gram matrix `K[i][j] = k(xᵢ, xⱼ)` over the rows of `x`.
pub fn kernel_matrix(k: &KernelSpec, x: &Matrix) -> Matrix {
    let n = x.rows();
    let mut data = vec![0.0; n * n];
    data.par_chunks_mut(n.max(1))
        .enumerate()
        .for_each(|(i, row)| {
            let xi = x.row(i);
            for (j, v) in row.iter_mut().enumerate() {
                *v = if i == j {
                    1.0
                } else {
                    k.from_sq_dist(sq_dist(xi, x.row(j)))
                };
            }
        });
    Matrix::new(n, n, data).expect("kernel values are finite")
}

/// `K[i][j] = k(aᵢ, bⱼ)`.
pub fn cross_kernel_matrix(k: &KernelSpec, a: &Matrix, b: &Matrix) -> Result<Matrix, KernelError> {
    if a.cols() != b.cols() {
        return Err(KernelError::DimensionMismatch {
            expected: a.cols(),
            found: b.cols(),
        });
    }
    let m = b.rows();
    let mut data = vec![0.0; a.rows() * m];
    data.par_chunks_mut(m.max(1))
        .enumerate()
        .for_each(|(i, row)| {
            let ai = a.row(i);
            for (j, v) in row.iter_mut().enumerate() {
                *v = k.from_sq_dist(sq_dist(ai, b.row(j)));
            }
        });
    Ok(Matrix::new(a.rows(), m, data).expect("kernel values are finite"))
}

/// Median of the pairwise distances between rows (bandwidth heuristic).
/// Uses at most the first `cap` rows.
pub fn median_pairwise_distance(x: &Matrix, cap: usize) -> f64 {
    let n = x.rows().min(cap);
    let mut d: Vec<f64> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .map(|(i, j)| sq_dist(x.row(i), x.row(j)).sqrt())
        .collect();
    if d.is_empty() {
        return 1.0;
    }
    let mid = d.len() / 2;
    let (_, m, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    *m
}

/// `f(x) = Σ αᵢ k(xᵢ, x)`.
#[derive(Debug, Clone)]
pub struct KernelMachine {
    pub kernel: KernelSpec,
    pub centers: Matrix,
    pub alpha: Vec<f64>,
    /// Diagonal jitter that was needed for the solve.
    pub jitter: f64,
}

impl KernelMachine {
    pub fn new(kernel: KernelSpec, centers: Matrix, alpha: Vec<f64>) -> Result<Self, KernelError> {
        if alpha.len() != centers.rows() {
            return Err(KernelError::DimensionMismatch {
                expected: centers.rows(),
                found: alpha.len(),
            });
        }
        Ok(Self {
            kernel,
            centers,
            alpha,
            jitter: 0.0,
        })
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64, KernelError> {
        if x.len() != self.centers.cols() {
            return Err(KernelError::DimensionMismatch {
                expected: self.centers.cols(),
                found: x.len(),
            });
        }
        Ok(self
            .centers
            .row_iter()
            .zip(&self.alpha)
            .map(|(c, a)| a * self.kernel.from_sq_dist(sq_dist(c, x)))
            .sum())
    }

    pub fn predict_batch(&self, x: &Matrix) -> Result<Vec<f64>, KernelError> {
        cross_kernel_matrix(&self.kernel, x, &self.centers)?
            .matvec(&self.alpha)
            .map_err(Into::into)
    }
}

/// Solves `Kα = y`, escalating through [`JITTER_LADDER`] until the
/// training residual is at most `1e-6·(1 + max|y|)`.
pub fn fit_interpolating(k: &KernelSpec, ds: &Dataset) -> Result<KernelMachine, KernelError> {
    if ds.is_empty() {
        return Err(KernelError::EmptyTrainingSet);
    }
    let gram = kernel_matrix(k, &ds.x);
    let tol = 1e-6 * (1.0 + ds.y.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    let mut worst = f64::INFINITY;
    for &jitter in &JITTER_LADDER {
        let chol = match Cholesky::factor(&gram, jitter) {
            Ok(c) => c,
            Err(LinalgError::NotPositiveDefinite { .. }) => continue,
            Err(e) => return Err(e.into()),
        };
        let alpha = chol.solve(&ds.y)?;
        let fitted = gram.matvec(&alpha)?;
        let residual = fitted
            .iter()
            .zip(&ds.y)
            .fold(0.0f64, |m, (f, y)| m.max((f - y).abs()));
        if residual <= tol {
            return Ok(KernelMachine {
                kernel: *k,
                centers: ds.x.clone(),
                alpha,
                jitter,
            });
        }
        worst = residual;
    }
    Err(KernelError::IllConditioned {
        residual: worst,
        jitter: JITTER_LADDER[JITTER_LADDER.len() - 1],
    })
}

/// `αᵀKα`, clamped at zero against rounding.
pub fn rkhs_norm_sq(km: &KernelMachine) -> f64 {
    let gram = kernel_matrix(&km.kernel, &km.centers);
    let ka = gram
        .matvec(&km.alpha)
        .expect("shapes agree by construction");
    dot(&km.alpha, &ka).max(0.0)
}

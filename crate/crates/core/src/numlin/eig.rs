use super::{LinalgError, Matrix, SYMMETRY_TOL};

const MAX_SWEEPS: usize = 100;

/// Eigendecomposition `A = V diag(values) Vᵀ` of a symmetric matrix.
///
/// Eigenvalues are sorted in descending order and `vectors` holds the
/// matching orthonormal eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct SymEig {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

impl SymEig {
    pub fn max(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    pub fn min(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }

    /// `V diag(values) Vᵀ`
    pub fn reconstruct(&self) -> Matrix {
        let n = self.values.len();
        Matrix::from_fn(n, n, |i, j| {
            (0..n)
                .map(|k| self.vectors[(i, k)] * self.values[k] * self.vectors[(j, k)])
                .sum()
        })
    }
}

/// Cyclic Jacobi eigensolver for symmetric matrices.
pub fn sym_eig(a: &Matrix) -> Result<SymEig, LinalgError> {
    if !a.is_square() {
        return Err(LinalgError::NotSquare);
    }
    if !a.is_symmetric(SYMMETRY_TOL) {
        return Err(LinalgError::NotSymmetric);
    }
    let n = a.rows();
    // Work on the exactly symmetrized copy.
    let mut m = Matrix::from_fn(n, n, |i, j| 0.5 * (a[(i, j)] + a[(j, i)]));
    let mut v = Matrix::identity(n);
    let scale = m.frobenius_norm();

    let mut converged = n < 2 || scale == 0.0;
    let mut sweeps = 0;
    while !converged {
        if sweeps == MAX_SWEEPS {
            return Err(LinalgError::NoConvergence { iterations: sweeps });
        }
        sweeps += 1;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                // Off-diagonal entry is negligible next to both pivots.
                let g = 100.0 * apq.abs();
                if sweeps > 4 && app.abs() + g == app.abs() && aqq.abs() + g == aqq.abs() {
                    m[(p, q)] = 0.0;
                    m[(q, p)] = 0.0;
                    continue;
                }
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta.is_infinite() {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                rotate(&mut m, &mut v, p, q, c, s);
            }
        }
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum();
        converged = off.sqrt() <= 1e-15 * scale;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(j, j)].total_cmp(&m[(i, i)]));
    let values = order.iter().map(|&k| m[(k, k)]).collect();
    let vectors = Matrix::from_fn(n, n, |i, j| v[(i, order[j])]);
    Ok(SymEig { values, vectors })
}

/// Applies the Jacobi rotation `Jᵀ M J` zeroing `M[p][q]` and accumulates `V J`.
fn rotate(m: &mut Matrix, v: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    let n = m.rows();
    for k in 0..n {
        let mkp = m[(k, p)];
        let mkq = m[(k, q)];
        m[(k, p)] = c * mkp - s * mkq;
        m[(k, q)] = s * mkp + c * mkq;
    }
    for k in 0..n {
        let mpk = m[(p, k)];
        let mqk = m[(q, k)];
        m[(p, k)] = c * mpk - s * mqk;
        m[(q, k)] = s * mpk + c * mqk;
    }
    m[(p, q)] = 0.0;
    m[(q, p)] = 0.0;
    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = c * vkp - s * vkq;
        v[(k, q)] = s * vkp + c * vkq;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn random_symmetric(n: usize, seed: u64) -> Matrix {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let b = Matrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        Matrix::from_fn(n, n, |i, j| b[(i, j)] + b[(j, i)])
    }

    fn check_decomposition(a: &Matrix, e: &SymEig) {
        let n = a.rows();
        let anorm = a.frobenius_norm().max(1e-300);
        for k in 0..n {
            let vk = e.vectors.column(k);
            let av = a.matvec(&vk).unwrap();
            for i in 0..n {
                assert!((av[i] - e.values[k] * vk[i]).abs() <= 1e-8 * anorm);
            }
        }
        let vtv = e.vectors.transpose().matmul(&e.vectors).unwrap();
        assert!(vtv.sub(&Matrix::identity(n)).unwrap().max_abs() <= 1e-8);
        assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn diagonal() {
        let a = Matrix::from_diag(&[1.0, 3.0]);
        let e = sym_eig(&a).unwrap();
        assert_eq!(e.values, vec![3.0, 1.0]);
        assert_eq!(e.vectors[(1, 0)].abs(), 1.0);
        assert_eq!(e.vectors[(0, 1)].abs(), 1.0);
    }

    #[test]
    fn swap_matrix() {
        let a = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]);
        let e = sym_eig(&a).unwrap();
        assert!((e.values[0] - 1.0).abs() < 1e-15);
        assert!((e.values[1] + 1.0).abs() < 1e-15);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((e.vectors[(0, 0)].abs() - h).abs() < 1e-15);
        assert!((e.vectors[(0, 0)] - e.vectors[(1, 0)]).abs() < 1e-15);
        assert!((e.vectors[(0, 1)] + e.vectors[(1, 1)]).abs() < 1e-15);
        check_decomposition(&a, &e);
    }

    #[test]
    fn random_reconstruction() {
        let a = random_symmetric(5, 11);
        let e = sym_eig(&a).unwrap();
        check_decomposition(&a, &e);
        let err = e.reconstruct().sub(&a).unwrap().max_abs();
        assert!(
            err <= 1e-8 * a.frobenius_norm(),
            "reconstruction error {err}"
        );
    }

    #[test]
    fn larger_and_degenerate() {
        let a = random_symmetric(40, 3);
        check_decomposition(&a, &sym_eig(&a).unwrap());
        // repeated eigenvalue
        let b = Matrix::from_diag(&[2.0, 2.0, 2.0, -1.0]);
        let e = sym_eig(&b).unwrap();
        check_decomposition(&b, &e);
        assert_eq!(sym_eig(&Matrix::zeros(3, 3)).unwrap().values, vec![0.0; 3]);
    }

    #[test]
    fn rejects_nonsymmetric() {
        let a = Matrix::from_rows(&[[1.0, 2.0], [3.0, 1.0]]);
        assert_eq!(sym_eig(&a).unwrap_err(), LinalgError::NotSymmetric);
    }

    proptest! {
        #[test]
        fn trace_equals_eigenvalue_sum(seed in 0u64..1000, n in 1usize..12) {
            let a = random_symmetric(n, seed);
            let e = sym_eig(&a).unwrap();
            let s: f64 = e.values.iter().sum();
            prop_assert!((s - a.trace()).abs() <= 1e-8 * a.frobenius_norm().max(1.0));
        }

        #[test]
        fn determinant_sign_two_by_two(a in -5.0f64..5.0, b in -5.0f64..5.0, d in -5.0f64..5.0) {
            let m = Matrix::from_rows(&[[a, b], [b, d]]);
            let e = sym_eig(&m).unwrap();
            let det = a * d - b * b;
            let prod = e.values[0] * e.values[1];
            prop_assert!((prod - det).abs() <= 1e-10 * (1.0 + det.abs() + a * a + d * d + b * b));
            if det.abs() > 1e-8 {
                prop_assert_eq!(prod.signum(), det.signum());
            }
        }
    }
}

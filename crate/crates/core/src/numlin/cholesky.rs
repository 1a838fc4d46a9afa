use super::{dot, LinalgError, Matrix, SYMMETRY_TOL};

/// Lower-triangular Cholesky factor of `A + jitter·I`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: Matrix,
    jitter: f64,
}

impl Cholesky {
    pub fn factor(a: &Matrix, jitter: f64) -> Result<Self, LinalgError> {
        if !a.is_square() {
            return Err(LinalgError::NotSquare);
        }
        if !a.is_symmetric(SYMMETRY_TOL) {
            return Err(LinalgError::NotSymmetric);
        }
        let n = a.rows();
        let mut l = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let s = dot(&l.row(i)[..j], &l.row(j)[..j]);
                if i == j {
                    let d = a[(i, i)] + jitter - s;
                    if d <= 0.0 || !d.is_finite() {
                        return Err(LinalgError::NotPositiveDefinite { pivot: i, value: d });
                    }
                    l[(i, i)] = d.sqrt();
                } else {
                    l[(i, j)] = (a[(i, j)] - s) / l[(j, j)];
                }
            }
        }
        Ok(Self { l, jitter })
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn factor_l(&self) -> &Matrix {
        &self.l
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
        let n = self.l.rows();
        if b.len() != n {
            return Err(LinalgError::DimensionMismatch {
                expected: n,
                found: b.len(),
            });
        }
        // L z = b
        let mut z = b.to_vec();
        for i in 0..n {
            let row = self.l.row(i);
            let s: f64 = row[..i].iter().zip(&z[..i]).map(|(a, b)| a * b).sum();
            z[i] = (z[i] - s) / row[i];
        }
        // Lᵀ x = z, column-oriented so L is still read by rows.
        let mut x = z;
        for i in (0..n).rev() {
            x[i] /= self.l[(i, i)];
            let xi = x[i];
            for (k, xk) in x[..i].iter_mut().enumerate() {
                *xk -= self.l[(i, k)] * xi;
            }
        }
        Ok(x)
    }
}

/// Solves `(A + jitter·I) x = b` for symmetric positive (semi)definite `A`.
pub fn solve_spd(a: &Matrix, b: &[f64], jitter: f64) -> Result<Vec<f64>, LinalgError> {
    if a.is_square() && b.len() != a.rows() {
        return Err(LinalgError::DimensionMismatch {
            expected: a.rows(),
            found: b.len(),
        });
    }
    Cholesky::factor(a, jitter)?.solve(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn identity_and_diagonal() {
        let x = solve_spd(&Matrix::identity(2), &[3.0, 4.0], 0.0).unwrap();
        assert!(close(&x, &[3.0, 4.0], 1e-15));
        let a = Matrix::from_rows(&[[2.0, 0.0], [0.0, 4.0]]);
        let x = solve_spd(&a, &[2.0, 4.0], 0.0).unwrap();
        assert!(close(&x, &[1.0, 1.0], 1e-15));
    }

    #[test]
    fn two_by_two_matches_cofactor_inverse() {
        // inverse of [[1, .5], [.5, 1]] is (1/0.75) [[1, -.5], [-.5, 1]]
        let a = Matrix::from_rows(&[[1.0, 0.5], [0.5, 1.0]]);
        let x = solve_spd(&a, &[1.0, 1.0], 0.0).unwrap();
        let expect = (1.0 - 0.5) / 0.75;
        assert!(close(&x, &[expect, expect], 1e-14));
        assert!((expect - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        let ns = Matrix::from_rows(&[[1.0, 2.0], [0.0, 1.0]]);
        assert_eq!(
            solve_spd(&ns, &[1.0, 1.0], 0.0),
            Err(LinalgError::NotSymmetric)
        );
        let indef = Matrix::from_rows(&[[1.0, 0.0], [0.0, -1.0]]);
        assert!(matches!(
            solve_spd(&indef, &[1.0, 1.0], 0.0),
            Err(LinalgError::NotPositiveDefinite { pivot: 1, .. })
        ));
        assert!(matches!(
            solve_spd(&Matrix::identity(2), &[1.0], 0.0),
            Err(LinalgError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn jitter_rescues_singular_psd() {
        let a = Matrix::from_rows(&[[1.0, 1.0], [1.0, 1.0]]);
        assert!(solve_spd(&a, &[1.0, 1.0], 0.0).is_err());
        let x = solve_spd(&a, &[1.0, 1.0], 1e-8).unwrap();
        let r0 = (1.0 + 1e-8) * x[0] + x[1] - 1.0;
        assert!(r0.abs() < 1e-8);
    }
}

use super::{norm, LinalgError, Matrix};

const MAX_ITERS: usize = 20_000;
const REL_TOL: f64 = 1e-13;

/// Largest singular value by power iteration on `AᵀA`.
pub fn spectral_norm(a: &Matrix) -> Result<f64, LinalgError> {
    if a.is_empty() {
        return Err(LinalgError::Empty);
    }
    let n = a.cols();
    // Clustered top singular values slow the stopping test down without
    // hurting the estimate, so the last iterate is accepted either way.
    let est = power_estimate(n, MAX_ITERS, REL_TOL, |x| {
        let ax = a.matvec(x).expect("shape checked");
        a.tr_matvec(&ax).expect("shape checked")
    })?;
    Ok(est.value.sqrt())
}

/// Largest `|λ|` of a symmetric linear operator given only its action.
///
/// The start vector is a fixed deterministic sequence so repeated calls
/// return identical results.
pub fn sym_operator_norm(
    dim: usize,
    max_iters: usize,
    apply: impl FnMut(&[f64]) -> Vec<f64>,
) -> Result<f64, LinalgError> {
    let est = power_estimate(dim, max_iters, REL_TOL, apply)?;
    if est.converged {
        Ok(est.value)
    } else {
        Err(LinalgError::NoConvergence {
            iterations: max_iters,
        })
    }
}

/// Outcome of a power iteration that is allowed to stop early.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerEstimate {
    /// Lower bound on the largest `|λ|`.
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Power iteration returning its best estimate even without convergence.
pub fn power_estimate(
    dim: usize,
    max_iters: usize,
    rel_tol: f64,
    mut apply: impl FnMut(&[f64]) -> Vec<f64>,
) -> Result<PowerEstimate, LinalgError> {
    if dim == 0 {
        return Err(LinalgError::Empty);
    }
    let mut x = start_vector(dim);
    let mut estimate = 0.0;
    for it in 0..max_iters {
        let y = apply(&x);
        let ny = norm(&y);
        if ny == 0.0 {
            return Ok(PowerEstimate {
                value: 0.0,
                iterations: it + 1,
                converged: true,
            });
        }
        let converged = (ny - estimate).abs() <= rel_tol * ny;
        estimate = ny;
        if converged && it > 2 {
            return Ok(PowerEstimate {
                value: estimate,
                iterations: it + 1,
                converged: true,
            });
        }
        x = y.into_iter().map(|v| v / ny).collect();
    }
    Ok(PowerEstimate {
        value: estimate,
        iterations: max_iters,
        converged: false,
    })
}

fn start_vector(dim: usize) -> Vec<f64> {
    // splitmix-style sequence mapped to (0.5, 1.5)
    let mut state: u64 = 0x9E37_79B9_7F4A_7C15;
    let mut v: Vec<f64> = (0..dim)
        .map(|_| {
            state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
            let mut z = state;
            z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
            z ^= z >> 31;
            0.5 + (z >> 11) as f64 / (1u64 << 53) as f64
        })
        .collect();
    let nv = norm(&v);
    v.iter_mut().for_each(|e| *e /= nv);
    v
}

#[cfg(test)]
mod tests {
    use super::super::svd;
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn diagonal_and_nilpotent() {
        let a = Matrix::from_diag(&[2.0, -5.0]);
        assert!((spectral_norm(&a).unwrap() - 5.0).abs() < 5e-6);
        let n = Matrix::from_rows(&[[0.0, 1.0], [0.0, 0.0]]);
        assert!((spectral_norm(&n).unwrap() - 1.0).abs() < 1e-6);
        assert_eq!(spectral_norm(&Matrix::zeros(2, 2)).unwrap(), 0.0);
    }

    #[test]
    fn matches_svd_oracle() {
        let a = random(6, 4, 21);
        let oracle = svd(&a).unwrap().max_singular();
        let got = spectral_norm(&a).unwrap();
        assert!((got - oracle).abs() <= 1e-6 * oracle);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn transpose_invariant(seed in 0u64..5000, r in 1usize..9, c in 1usize..9) {
            let a = random(r, c, seed);
            let s1 = spectral_norm(&a).unwrap();
            let s2 = spectral_norm(&a.transpose()).unwrap();
            prop_assert!((s1 - s2).abs() <= 1e-6 * s1);
        }
    }
}

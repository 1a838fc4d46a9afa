use super::{dot, LinalgError, Matrix, DEFAULT_RANK_TOL};

const MAX_SWEEPS: usize = 80;

/// Thin singular value decomposition `A = U diag(s) Vᵀ`.
///
/// With `k = min(rows, cols)`, `u` is `rows×k`, `v` is `cols×k` and `s` is
/// sorted descending. Columns of `u` belonging to exactly-zero singular
/// values are left as zero vectors.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Matrix,
    pub s: Vec<f64>,
    pub v: Matrix,
}

impl Svd {
    pub fn max_singular(&self) -> f64 {
        self.s.first().copied().unwrap_or(0.0)
    }

    /// Number of singular values above `rel_tol · σmax`.
    pub fn rank(&self, rel_tol: f64) -> usize {
        let cut = rel_tol * self.max_singular();
        self.s.iter().filter(|&&s| s > cut).count()
    }

    /// Ratio of the largest to the smallest retained singular value.
    pub fn condition_number(&self, rel_tol: f64) -> f64 {
        let r = self.rank(rel_tol);
        if r == 0 {
            return f64::INFINITY;
        }
        self.s[0] / self.s[r - 1]
    }

    /// `V Σ⁺ Uᵀ b` with singular values below `rel_tol · σmax` discarded.
    pub fn solve_min_norm(&self, b: &[f64], rel_tol: f64) -> Result<Vec<f64>, LinalgError> {
        if b.len() != self.u.rows() {
            return Err(LinalgError::DimensionMismatch {
                expected: self.u.rows(),
                found: b.len(),
            });
        }
        let utb = self.u.tr_matvec(b)?;
        let r = self.rank(rel_tol);
        let coef: Vec<f64> = (0..self.s.len())
            .map(|k| if k < r { utb[k] / self.s[k] } else { 0.0 })
            .collect();
        self.v.matvec(&coef)
    }
}

/// Computes the thin SVD by Householder QR followed by one-sided Jacobi on
/// the triangular factor.
pub fn svd(a: &Matrix) -> Result<Svd, LinalgError> {
    if a.is_empty() {
        return Err(LinalgError::Empty);
    }
    if a.rows() < a.cols() {
        let t = svd(&a.transpose())?;
        return Ok(Svd {
            u: t.v,
            s: t.s,
            v: t.u,
        });
    }
    let (rows, cols) = a.shape();
    let qr = HouseholderQr::new(a);
    let r_cols = qr.r_columns();
    let (mut g, v) = one_sided_jacobi(r_cols)?;

    let s: Vec<f64> = g.iter().map(|c| dot(c, c).sqrt()).collect();
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]));

    for (col, &sigma) in g.iter_mut().zip(&s) {
        if sigma > 0.0 {
            col.iter_mut().for_each(|x| *x /= sigma);
        }
    }
    // U = Q [U_r; 0]
    let u_cols: Vec<Vec<f64>> = order
        .iter()
        .map(|&j| {
            let mut c = g[j].clone();
            c.resize(rows, 0.0);
            qr.apply_q(&mut c);
            c
        })
        .collect();
    let u_full = Matrix::from_fn(rows, cols, |i, jj| u_cols[jj][i]);
    let v_sorted = Matrix::from_fn(cols, cols, |i, jj| v[order[jj]][i]);
    Ok(Svd {
        u: u_full,
        s: order.iter().map(|&j| s[j]).collect(),
        v: v_sorted,
    })
}

/// Moore-Penrose pseudo-inverse via SVD, zeroing singular values below
/// `rank_tol · σmax`.
pub fn pinv(a: &Matrix, rank_tol: f64) -> Result<Matrix, LinalgError> {
    let d = svd(a)?;
    let r = d.rank(rank_tol);
    let (rows, cols) = a.shape();
    let mut out = Matrix::zeros(cols, rows);
    for k in 0..r {
        let inv = 1.0 / d.s[k];
        for i in 0..cols {
            let vik = d.v[(i, k)] * inv;
            if vik == 0.0 {
                continue;
            }
            let row = out.row_mut(i);
            for (j, o) in row.iter_mut().enumerate() {
                *o += vik * d.u[(j, k)];
            }
        }
    }
    Ok(out)
}

/// Minimum-norm least-squares solution `A† b` without forming `A†`.
pub fn min_norm_solve(
    a: &Matrix,
    b: &[f64],
    rank_tol: Option<f64>,
) -> Result<Vec<f64>, LinalgError> {
    if b.len() != a.rows() {
        return Err(LinalgError::DimensionMismatch {
            expected: a.rows(),
            found: b.len(),
        });
    }
    svd(a)?.solve_min_norm(b, rank_tol.unwrap_or(DEFAULT_RANK_TOL))
}

struct HouseholderQr {
    rows: usize,
    /// Working columns; the upper triangle holds R after factoring.
    cols: Vec<Vec<f64>>,
    /// Unit reflector for each column, acting on rows `k..`.
    reflectors: Vec<Option<Vec<f64>>>,
}

impl HouseholderQr {
    fn new(a: &Matrix) -> Self {
        let (rows, ncols) = a.shape();
        let mut cols: Vec<Vec<f64>> = (0..ncols).map(|j| a.column(j)).collect();
        let mut reflectors = Vec::with_capacity(ncols);
        for k in 0..ncols {
            let x = &cols[k][k..];
            let xnorm = dot(x, x).sqrt();
            if xnorm == 0.0 {
                reflectors.push(None);
                continue;
            }
            let alpha = if x[0] > 0.0 { -xnorm } else { xnorm };
            let mut v = x.to_vec();
            v[0] -= alpha;
            let vnorm = dot(&v, &v).sqrt();
            if vnorm == 0.0 {
                reflectors.push(None);
                continue;
            }
            v.iter_mut().for_each(|e| *e /= vnorm);
            for col in cols.iter_mut().skip(k) {
                reflect(&v, &mut col[k..]);
            }
            reflectors.push(Some(v));
        }
        Self {
            rows,
            cols,
            reflectors,
        }
    }

    fn r_columns(&self) -> Vec<Vec<f64>> {
        let n = self.cols.len();
        (0..n)
            .map(|j| {
                (0..n)
                    .map(|i| if i <= j { self.cols[j][i] } else { 0.0 })
                    .collect()
            })
            .collect()
    }

    /// Overwrites the column `b` with `Q b`.
    fn apply_q(&self, b: &mut [f64]) {
        debug_assert_eq!(b.len(), self.rows);
        for (k, refl) in self.reflectors.iter().enumerate().rev() {
            if let Some(v) = refl {
                reflect(v, &mut b[k..]);
            }
        }
    }
}

fn reflect(v: &[f64], x: &mut [f64]) {
    let p = 2.0 * dot(v, x);
    for (xi, vi) in x.iter_mut().zip(v) {
        *xi -= p * vi;
    }
}

type Columns = Vec<Vec<f64>>;

/// Hestenes iteration: rotates column pairs until all are mutually
/// orthogonal. Returns the rotated columns and the accumulated rotation
/// (as columns).
fn one_sided_jacobi(mut g: Columns) -> Result<(Columns, Columns), LinalgError> {
    let n = g.len();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();
    let mut norms: Vec<f64> = g.iter().map(|c| dot(c, c)).collect();
    // Columns at rounding level of the whole matrix carry no direction.
    let negligible = (4.0 * f64::EPSILON).powi(2) * norms.iter().sum::<f64>();
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = norms[p];
                let beta = norms[q];
                if alpha <= negligible || beta <= negligible {
                    continue;
                }
                let gamma = dot(&g[p], &g[q]);
                if gamma == 0.0 || gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = if zeta >= 0.0 {
                    1.0 / (zeta + (1.0 + zeta * zeta).sqrt())
                } else {
                    -1.0 / (-zeta + (1.0 + zeta * zeta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (gp, gq) = pair_mut(&mut g, p, q);
                rotate_pair(gp, gq, c, s);
                let (vp, vq) = pair_mut(&mut v, p, q);
                rotate_pair(vp, vq, c, s);
                norms[p] = dot(&g[p], &g[p]);
                norms[q] = dot(&g[q], &g[q]);
            }
        }
        if !rotated {
            return Ok((g, v));
        }
    }
    Err(LinalgError::NoConvergence {
        iterations: MAX_SWEEPS,
    })
}

fn pair_mut(cols: &mut [Vec<f64>], p: usize, q: usize) -> (&mut Vec<f64>, &mut Vec<f64>) {
    debug_assert!(p < q);
    let (lo, hi) = cols.split_at_mut(q);
    (&mut lo[p], &mut hi[0])
}

fn rotate_pair(a: &mut [f64], b: &mut [f64], c: f64, s: f64) {
    for (x, y) in a.iter_mut().zip(b.iter_mut()) {
        let (xa, yb) = (*x, *y);
        *x = c * xa - s * yb;
        *y = s * xa + c * yb;
    }
}

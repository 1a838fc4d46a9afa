use std::collections::HashMap;

use rand_distr::{Distribution, Exp1};

use super::{sign_or, DirectError};
use crate::datagen::{Dataset, Task};
use crate::numlin::sq_dist;
use crate::rng::{substream, tag};

/// Barycentric slack allowed when locating a query.
const LOCATE_TOL: f64 = 1e-10;
/// Super-simplex inradius as a multiple of the data radius.
const SUPER_SCALE: f64 = 1e5;

/// Piecewise-linear interpolant over a Delaunay triangulation of the
/// training inputs.
#[derive(Debug, Clone)]
pub struct SimplicialInterpolant {
    train: Dataset,
    simplices: Vec<Vec<usize>>,
}

impl SimplicialInterpolant {
    pub fn simplices(&self) -> &[Vec<usize>] {
        &self.simplices
    }

    pub fn train(&self) -> &Dataset {
        &self.train
    }

    /// Locates `x` and returns the containing simplex with barycentric
    /// coordinates.
    pub fn locate(&self, x: &[f64]) -> Result<(usize, Vec<f64>), DirectError> {
        let d = self.train.dim();
        if x.len() != d {
            return Err(DirectError::DimensionMismatch {
                expected: d,
                found: x.len(),
            });
        }
        for (s, verts) in self.simplices.iter().enumerate() {
            let pts: Vec<&[f64]> = verts.iter().map(|&v| self.train.x.row(v)).collect();
            if let Some(lambda) = barycentric(&pts, x) {
                if lambda.iter().all(|&l| l >= -LOCATE_TOL) {
                    return Ok((s, lambda));
                }
            }
        }
        Err(DirectError::OutsideHull)
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64, DirectError> {
        let (s, lambda) = self.locate(x)?;
        let verts = &self.simplices[s];
        let value: f64 = verts
            .iter()
            .zip(&lambda)
            .map(|(&v, l)| l * self.train.y[v])
            .sum();
        Ok(match self.train.task {
            Task::Regression => value,
            Task::Classification => {
                // ties go to the vertex with the largest weight
                let (best, _) =
                    lambda
                        .iter()
                        .enumerate()
                        .fold(
                            (0, f64::NEG_INFINITY),
                            |acc, (k, &l)| if l > acc.1 { (k, l) } else { acc },
                        );
                sign_or(value, self.train.y[verts[best]])
            }
        })
    }
}

/// Delaunay triangulation by incremental (Bowyer-Watson) insertion,
/// supported for input dimension 1 to 3.
pub fn build_simplicial(ds: &Dataset) -> Result<SimplicialInterpolant, DirectError> {
    let d = ds.dim();
    if ds.is_empty() {
        return Err(DirectError::EmptyTrainingSet);
    }
    if d > 3 {
        return Err(DirectError::DimensionTooHigh(d));
    }
    if d == 0 || ds.len() < d + 1 || affine_rank(ds) < d {
        return Err(DirectError::DegeneratePosition);
    }
    let simplices = if d == 1 {
        let mut order: Vec<usize> = (0..ds.len()).collect();
        order.sort_by(|&a, &b| ds.x[(a, 0)].total_cmp(&ds.x[(b, 0)]));
        if order.windows(2).any(|w| ds.x[(w[0], 0)] == ds.x[(w[1], 0)]) {
            return Err(DirectError::DegeneratePosition);
        }
        order
            .windows(2)
            .map(|w| vec![w[0].min(w[1]), w[0].max(w[1])])
            .collect()
    } else {
        bowyer_watson(ds)?
    };
    Ok(SimplicialInterpolant {
        train: ds.clone(),
        simplices,
    })
}

pub fn simplicial_predict(s: &SimplicialInterpolant, x: &[f64]) -> Result<f64, DirectError> {
    s.predict(x)
}

/// Closed-form interpolant on the standard `d`-simplex whose vertices carry
/// label `+1`, except the origin which carries `-1`:
/// `sign(2·Σxᵢ − 1)`, with the tie `Σxᵢ = 1/2` going to `-1`.
pub fn simplex_example_predict(d: usize, x: &[f64]) -> Result<f64, DirectError> {
    if x.len() != d {
        return Err(DirectError::DimensionMismatch {
            expected: d,
            found: x.len(),
        });
    }
    let sum: f64 = x.iter().sum();
    if x.iter().any(|&v| v < -1e-12) || sum > 1.0 + 1e-12 {
        return Err(DirectError::OutsideSimplex);
    }
    Ok(if 2.0 * sum - 1.0 > 0.0 { 1.0 } else { -1.0 })
}

/// Monte Carlo estimate of the fraction of the standard `d`-simplex where
/// the closed-form interpolant predicts `-1`. Returns `(fraction, stderr)`.
pub fn simplex_disagreement_fraction(d: usize, draws: usize, seed: u64) -> (f64, f64) {
    let mut rng = substream(seed, &[tag::SAMPLE, d as u64]);
    let mut point = vec![0.0; d];
    let mut hits = 0usize;
    for _ in 0..draws {
        let mut total = 0.0;
        for p in point.iter_mut() {
            *p = Exp1.sample(&mut rng);
            total += *p;
        }
        let slack: f64 = Exp1.sample(&mut rng);
        total += slack;
        point.iter_mut().for_each(|p| *p /= total);
        if simplex_example_predict(d, &point).expect("inside by construction") < 0.0 {
            hits += 1;
        }
    }
    let p = hits as f64 / draws as f64;
    (p, (p * (1.0 - p) / draws as f64).sqrt())
}

fn affine_rank(ds: &Dataset) -> usize {
    let d = ds.dim();
    let origin = ds.x.row(0);
    let scale =
        ds.x.row_iter()
            .map(|r| sq_dist(r, origin))
            .fold(0.0, f64::max)
            .sqrt();
    if scale == 0.0 {
        return 0;
    }
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for r in ds.x.row_iter().skip(1) {
        let mut v: Vec<f64> = r.iter().zip(origin).map(|(a, b)| a - b).collect();
        for b in &basis {
            let p: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
        }
        let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if nv > 1e-9 * scale {
            v.iter_mut().for_each(|x| *x /= nv);
            basis.push(v);
            if basis.len() == d {
                break;
            }
        }
    }
    basis.len()
}

struct Cell {
    verts: Vec<usize>,
    center: Vec<f64>,
    radius_sq: f64,
}

fn bowyer_watson(ds: &Dataset) -> Result<Vec<Vec<usize>>, DirectError> {
    let n = ds.len();
    let d = ds.dim();
    let mut pts: Vec<Vec<f64>> = ds.x.row_iter().map(|r| r.to_vec()).collect();

    let mut center = vec![0.0; d];
    for p in &pts {
        center
            .iter_mut()
            .zip(p)
            .for_each(|(c, x)| *c += x / n as f64);
    }
    let radius = pts
        .iter()
        .map(|p| sq_dist(p, &center))
        .fold(0.0, f64::max)
        .sqrt()
        .max(1e-300);
    let s = SUPER_SCALE * radius;
    pts.extend(super_simplex(d).into_iter().map(|u| {
        u.iter()
            .zip(&center)
            .map(|(ui, ci)| ci + s * ui)
            .collect::<Vec<f64>>()
    }));

    let first: Vec<usize> = (n..n + d + 1).collect();
    let mut cells = vec![make_cell(&pts, first).ok_or(DirectError::DegeneratePosition)?];

    for p in 0..n {
        let point = &pts[p];
        let (bad, good): (Vec<Cell>, Vec<Cell>) = cells
            .into_iter()
            .partition(|c| sq_dist(point, &c.center) < c.radius_sq * (1.0 - 1e-12));
        if bad.is_empty() {
            return Err(DirectError::DegeneratePosition);
        }
        let mut facets: HashMap<Vec<usize>, usize> = HashMap::new();
        for c in &bad {
            for skip in 0..=d {
                let mut f: Vec<usize> = c
                    .verts
                    .iter()
                    .enumerate()
                    .filter(|&(k, _)| k != skip)
                    .map(|(_, &v)| v)
                    .collect();
                f.sort_unstable();
                *facets.entry(f).or_insert(0) += 1;
            }
        }
        cells = good;
        let mut boundary: Vec<Vec<usize>> = facets
            .into_iter()
            .filter(|&(_, c)| c == 1)
            .map(|(f, _)| f)
            .collect();
        boundary.sort_unstable();
        for mut f in boundary {
            f.push(p);
            cells.push(make_cell(&pts, f).ok_or(DirectError::DegeneratePosition)?);
        }
    }

    let mut out: Vec<Vec<usize>> = cells
        .into_iter()
        .filter(|c| c.verts.iter().all(|&v| v < n))
        .map(|c| {
            let mut v = c.verts;
            v.sort_unstable();
            v
        })
        .collect();
    out.sort_unstable();
    Ok(out)
}

/// Vertices of a regular simplex centred at the origin with inradius > 1.
fn super_simplex(d: usize) -> Vec<Vec<f64>> {
    match d {
        2 => (0..3)
            .map(|k| {
                let a = std::f64::consts::FRAC_PI_2 + k as f64 * 2.0 * std::f64::consts::PI / 3.0;
                vec![3.0 * a.cos(), 3.0 * a.sin()]
            })
            .collect(),
        3 => [
            [1.0, 1.0, 1.0],
            [1.0, -1.0, -1.0],
            [-1.0, 1.0, -1.0],
            [-1.0, -1.0, 1.0],
        ]
        .iter()
        .map(|v| v.iter().map(|x| 3.0 * x).collect())
        .collect(),
        _ => unreachable!("super simplex only needed for d in 2..=3"),
    }
}

fn make_cell(pts: &[Vec<f64>], verts: Vec<usize>) -> Option<Cell> {
    let (center, radius_sq) =
        circumsphere(&verts.iter().map(|&v| pts[v].as_slice()).collect::<Vec<_>>())?;
    Some(Cell {
        verts,
        center,
        radius_sq,
    })
}

/// Circumcentre and squared circumradius of a `d`-simplex.
pub(crate) fn circumsphere(v: &[&[f64]]) -> Option<(Vec<f64>, f64)> {
    let d = v[0].len();
    let v0 = v[0];
    // 2 (vᵢ − v₀)·c' = |vᵢ − v₀|² with c' = c − v₀
    let mut a = vec![vec![0.0; d]; d];
    let mut b = vec![0.0; d];
    for i in 0..d {
        let e: Vec<f64> = v[i + 1].iter().zip(v0).map(|(x, y)| x - y).collect();
        for j in 0..d {
            a[i][j] = 2.0 * e[j];
        }
        b[i] = e.iter().map(|x| x * x).sum();
    }
    let c = solve_small(a, b)?;
    let r2 = c.iter().map(|x| x * x).sum();
    Some((c.iter().zip(v0).map(|(x, y)| x + y).collect(), r2))
}

/// Barycentric coordinates of `x` with respect to the simplex `v`.
fn barycentric(v: &[&[f64]], x: &[f64]) -> Option<Vec<f64>> {
    let d = x.len();
    let v0 = v[0];
    let a: Vec<Vec<f64>> = (0..d)
        .map(|r| (0..d).map(|c| v[c + 1][r] - v0[r]).collect())
        .collect();
    let b: Vec<f64> = x.iter().zip(v0).map(|(p, q)| p - q).collect();
    let tail = solve_small(a, b)?;
    let mut out = Vec::with_capacity(d + 1);
    out.push(1.0 - tail.iter().sum::<f64>());
    out.extend(tail);
    Some(out)
}

/// Gaussian elimination with partial pivoting; `None` if singular.
fn solve_small(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    let scale = a
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return None;
    }
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() <= 1e-13 * scale {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            let pivot = a[col].clone();
            for (x, p) in a[r][col..].iter_mut().zip(&pivot[col..]) {
                *x -= f * p;
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{sample, DistributionSpec, Family};
    use crate::direct::NeighborPredictor;
    use crate::numlin::Matrix;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn ds(rows: &[&[f64]], y: &[f64], task: Task) -> Dataset {
        Dataset::new(Matrix::from_rows(rows), y.to_vec(), task).unwrap()
    }

    /// Brute-force check: no training point strictly inside any circumsphere.
    fn assert_empty_circumspheres(s: &SimplicialInterpolant) {
        let x = &s.train().x;
        for verts in s.simplices() {
            let pts: Vec<&[f64]> = verts.iter().map(|&v| x.row(v)).collect();
            let (c, r2) = circumsphere(&pts).unwrap();
            for (i, p) in x.row_iter().enumerate() {
                if verts.contains(&i) {
                    continue;
                }
                assert!(
                    sq_dist(p, &c) >= r2 * (1.0 - 1e-9),
                    "point {i} inside simplex {verts:?}"
                );
            }
        }
    }

    #[test]
    fn one_dimensional_sorted_segments() {
        let d = ds(
            &[&[2.0], &[0.0], &[1.0]],
            &[0.0, 1.0, 2.0],
            Task::Regression,
        );
        let s = build_simplicial(&d).unwrap();
        assert_eq!(s.simplices(), &[vec![1, 2], vec![0, 2]]);
    }

    #[test]
    fn square_gives_two_triangles() {
        let d = ds(
            &[&[0.0, 0.0], &[1.0, 0.0], &[1.0, 1.0], &[0.0, 1.0]],
            &[0.0, 1.0, 2.0, 3.0],
            Task::Regression,
        );
        let s = build_simplicial(&d).unwrap();
        assert_eq!(s.simplices().len(), 2);
        let shared: Vec<usize> = s.simplices()[0]
            .iter()
            .copied()
            .filter(|v| s.simplices()[1].contains(v))
            .collect();
        assert_eq!(shared.len(), 2);
        assert!(shared == vec![0, 2] || shared == vec![1, 3]);
        assert_empty_circumspheres(&s);
    }

    #[test]
    fn degenerate_and_high_dimension() {
        let col = ds(
            &[&[0.0, 0.0], &[1.0, 1.0], &[2.0, 2.0]],
            &[0.0; 3],
            Task::Regression,
        );
        assert_eq!(
            build_simplicial(&col).unwrap_err(),
            DirectError::DegeneratePosition
        );
        let hi = ds(&[&[0.0; 4], &[1.0; 4]], &[0.0, 1.0], Task::Regression);
        assert_eq!(
            build_simplicial(&hi).unwrap_err(),
            DirectError::DimensionTooHigh(4)
        );
    }

    #[test]
    fn vertex_and_edge_queries() {
        let d = ds(
            &[&[0.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]],
            &[0.0, 1.0, 5.0],
            Task::Regression,
        );
        let s = build_simplicial(&d).unwrap();
        assert_eq!(s.predict(&[1.0, 0.0]).unwrap(), 1.0);
        assert!((s.predict(&[0.5, 0.0]).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(
            s.predict(&[1.0, 1.0]).unwrap_err(),
            DirectError::OutsideHull
        );
    }

    #[test]
    fn random_two_and_three_dimensional_triangulations() {
        for (dim, n, seed) in [(2, 60, 1), (3, 40, 2), (2, 200, 3)] {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let x = Matrix::from_fn(n, dim, |_, _| rng.random_range(-1.0..1.0));
            let y: Vec<f64> = x.row_iter().map(|r| r.iter().sum()).collect();
            let d = Dataset::new(x, y, Task::Regression).unwrap();
            let s = build_simplicial(&d).unwrap();
            assert_empty_circumspheres(&s);
            // interpolation at vertices and exactness for linear targets
            for (r, &yi) in d.x.row_iter().zip(&d.y) {
                assert!((s.predict(r).unwrap() - yi).abs() < 1e-9);
            }
            for _ in 0..100 {
                // convex combination of three data points is inside the hull
                let w: Vec<f64> = (0..3).map(|_| rng.random::<f64>()).collect();
                let tot: f64 = w.iter().sum();
                let idx: Vec<usize> = (0..3).map(|_| rng.random_range(0..n)).collect();
                let q: Vec<f64> = (0..dim)
                    .map(|j| (0..3).map(|k| w[k] / tot * d.x[(idx[k], j)]).sum())
                    .collect();
                let v = s.predict(&q).unwrap();
                assert!((v - q.iter().sum::<f64>()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn standard_simplex_closed_form() {
        assert_eq!(simplex_example_predict(3, &[1.0, 0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(simplex_example_predict(3, &[0.0, 0.0, 0.0]).unwrap(), -1.0);
        assert_eq!(simplex_example_predict(2, &[0.25, 0.25]).unwrap(), -1.0);
        assert_eq!(
            simplex_example_predict(2, &[0.6, 0.6]).unwrap_err(),
            DirectError::OutsideSimplex
        );
        assert_eq!(
            simplex_example_predict(2, &[-0.1, 0.2]).unwrap_err(),
            DirectError::OutsideSimplex
        );
    }

    #[test]
    fn closed_form_matches_triangulated_interpolant() {
        // The standard 2-simplex with the origin relabelled -1.
        let d = ds(
            &[&[1.0, 0.0], &[0.0, 1.0], &[0.0, 0.0]],
            &[1.0, 1.0, -1.0],
            Task::Classification,
        );
        let s = build_simplicial(&d).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            let (a, b): (f64, f64) = (rng.random(), rng.random());
            let (a, b) = if a + b > 1.0 {
                (1.0 - a, 1.0 - b)
            } else {
                (a, b)
            };
            if (a + b - 0.5).abs() < 1e-9 {
                continue;
            }
            assert_eq!(
                s.predict(&[a, b]).unwrap(),
                simplex_example_predict(2, &[a, b]).unwrap()
            );
        }
    }

    #[test]
    fn disagreement_volume_d3() {
        let (p, se) = simplex_disagreement_fraction(3, 1_000_000, 17);
        assert!((p - 0.125).abs() < 3.0 * se, "{p} ± {se}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn one_dimensional_simplicial_equals_one_nn(seed in 0u64..10_000, n in 2usize..40) {
            let spec = DistributionSpec::new(Family::TwoGaussians { dim: 1, separation: 1.0, scale: 1.0 }, seed).unwrap();
            let d = sample(&spec, n).unwrap();
            let s = build_simplicial(&d).unwrap();
            let nn = NeighborPredictor::one_nn(d.clone()).unwrap();
            let xs = d.x.column(0);
            let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
            for _ in 0..100 {
                let q = lo + (hi - lo) * rng.random::<f64>();
                prop_assert_eq!(s.predict(&[q]).unwrap(), nn.predict(&[q]).unwrap());
            }
        }
    }
}

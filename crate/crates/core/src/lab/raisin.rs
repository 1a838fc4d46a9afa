use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::config::{check_unit_interval, positive};
use super::{
    config_err, median, render_csv, sign, Artifact, Experiment, ExperimentConfig, LabError,
    Provenance, RunOutput,
};
use crate::datagen::{corrupt, sample, CorruptionSpec, Dataset, DistributionSpec, Family};
use crate::direct::NeighborPredictor;
use crate::kernelmach::{fit_interpolating, KernelFamily, KernelMachine, KernelSpec};
use crate::numlin::{dist, norm};
use crate::rng::{derive_seed, substream, tag};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PredictorKind {
    Kernel(KernelSpec),
    OneNn,
}

/// An interpolating classifier under attack.
#[derive(Debug, Clone)]
pub enum Predictor {
    Kernel(KernelMachine),
    OneNn(NeighborPredictor),
}

impl Predictor {
    pub fn fit(kind: PredictorKind, train: &Dataset) -> Result<Self, LabError> {
        Ok(match kind {
            PredictorKind::Kernel(k) => Predictor::Kernel(fit_interpolating(&k, train)?),
            PredictorKind::OneNn => Predictor::OneNn(NeighborPredictor::one_nn(train.clone())?),
        })
    }

    /// Predicted label `±1`.
    pub fn label(&self, x: &[f64]) -> Result<f64, LabError> {
        Ok(sign(match self {
            Predictor::Kernel(m) => m.predict(x)?,
            Predictor::OneNn(p) => p.predict(x)?,
        }))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RaisinParams {
    pub spec: DistributionSpec,
    pub q: f64,
    pub n_grid: Vec<usize>,
    pub replicates: usize,
    pub queries: usize,
    pub random_dirs: usize,
    pub predictor: PredictorKind,
    /// Points of the coarse line scan before bisection.
    pub scan_steps: usize,
    /// Bisection stops once the bracket is this narrow.
    pub tol: f64,
    pub seed: u64,
}

impl RaisinParams {
    pub fn default_family() -> Family {
        Family::TwoGaussians {
            dim: 2,
            separation: 2.0,
            scale: 1.0,
        }
    }

    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self, LabError> {
        let seed = cfg.seed();
        let predictor = match cfg.model.predictor.as_deref().unwrap_or("kernel") {
            "kernel" => {
                PredictorKind::Kernel(cfg.model.kernel_spec_or(KernelFamily::Laplace, 1.0)?)
            }
            "knn" | "1nn" => PredictorKind::OneNn,
            other => {
                return config_err(format!(
                    "unknown model.predictor {other:?} (expected kernel or knn)"
                ))
            }
        };
        let n_grid = cfg.sweep.n.clone().unwrap_or_else(|| vec![200, 2000]);
        if n_grid.is_empty() || n_grid.contains(&0) {
            return config_err("sweep.n must be nonempty and positive");
        }
        Ok(Self {
            spec: cfg.data.distribution_or(&Self::default_family(), seed)?,
            q: check_unit_interval("data.q", cfg.data.q.unwrap_or(0.2))?,
            n_grid,
            replicates: positive("sweep.seeds", cfg.sweep.seeds.unwrap_or(10))?,
            queries: positive("sweep.queries", cfg.sweep.queries.unwrap_or(100))?,
            random_dirs: positive("sweep.random_dirs", cfg.sweep.random_dirs.unwrap_or(20))?,
            predictor,
            scan_steps: 32,
            tol: 1e-4,
            seed,
        })
    }
}

/// Attack on one correctly classified query point.
#[derive(Debug, Clone, PartialEq)]
pub struct RaisinQuery {
    pub n: usize,
    pub rep: usize,
    pub query: usize,
    /// Prediction at the unperturbed query (agrees with the Bayes rule).
    pub clean_pred: f64,
    /// Distance to the nearest label-corrupted training point carrying the
    /// opposite label.
    pub corrupted_dist: f64,
    /// Smallest step toward that point found to flip the prediction.
    pub flip_radius: f64,
    /// Re-evaluation at `flip_radius` confirms the flip.
    pub success: bool,
    /// Fraction of random directions of norm `flip_radius` that flip.
    pub random_flip_frac: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RaisinSummary {
    pub n: usize,
    pub rep: usize,
    pub median_radius: f64,
    pub success_rate: f64,
    pub random_flip_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RaisinReport {
    pub queries: Vec<RaisinQuery>,
    /// One entry per `(n, replicate)`, ordered by `n` then replicate.
    pub summary: Vec<RaisinSummary>,
}

impl RaisinReport {
    pub const CSV_HEADER: &'static str =
        "n,rep,query,clean_pred,corrupted_dist,flip_radius,success,random_flip_frac";

    pub fn csv_lines(&self) -> Vec<String> {
        self.queries
            .iter()
            .map(|r| {
                format!(
                    "{},{},{},{},{:.6e},{:.6e},{},{:.4}",
                    r.n,
                    r.rep,
                    r.query,
                    r.clean_pred,
                    r.corrupted_dist,
                    r.flip_radius,
                    u8::from(r.success),
                    r.random_flip_frac
                )
            })
            .collect()
    }

    pub fn summary_for(&self, n: usize, rep: usize) -> Option<&RaisinSummary> {
        self.summary.iter().find(|s| s.n == n && s.rep == rep)
    }

    /// Targeted success rate and random flip rate over all queries.
    pub fn overall_rates(&self) -> (f64, f64) {
        let k = self.queries.len() as f64;
        let hit = self.queries.iter().filter(|q| q.success).count() as f64 / k;
        let random = self.queries.iter().map(|q| q.random_flip_frac).sum::<f64>() / k;
        (hit, random)
    }
}

pub fn run_raisin_search(p: &RaisinParams) -> Result<RaisinReport, LabError> {
    if p.q == 0.0 {
        return Err(LabError::NoCorruptedNeighbor);
    }
    let cells: Vec<(usize, usize)> = p
        .n_grid
        .iter()
        .flat_map(|&n| (0..p.replicates).map(move |rep| (n, rep)))
        .collect();
    let per_cell = cells
        .par_iter()
        .map(|&(n, rep)| attack_cell(p, n, rep))
        .collect::<Result<Vec<_>, LabError>>()?;

    let mut queries = Vec::new();
    let mut summary = Vec::new();
    for ((n, rep), qs) in cells.into_iter().zip(per_cell) {
        let radii: Vec<f64> = qs
            .iter()
            .filter(|q| q.success)
            .map(|q| q.flip_radius)
            .collect();
        let k = qs.len().max(1) as f64;
        summary.push(RaisinSummary {
            n,
            rep,
            median_radius: median(&radii),
            success_rate: radii.len() as f64 / k,
            random_flip_rate: qs.iter().map(|q| q.random_flip_frac).sum::<f64>() / k,
        });
        queries.extend(qs);
    }
    Ok(RaisinReport { queries, summary })
}

fn attack_cell(p: &RaisinParams, n: usize, rep: usize) -> Result<Vec<RaisinQuery>, LabError> {
    let cell_seed = derive_seed(p.seed, &[rep as u64, n as u64]);
    let train = sample(&p.spec.with_seed(derive_seed(cell_seed, &[0])), n)?;
    let train = corrupt(
        &train,
        &CorruptionSpec::new(p.q, derive_seed(cell_seed, &[1]))?,
    )?;
    let corrupted: Vec<usize> = (0..n)
        .filter(|&i| p.spec.bayes_predict(train.x.row(i)) != Some(train.y[i]))
        .collect();
    if corrupted.is_empty() {
        return Err(LabError::NoCorruptedNeighbor);
    }
    let model = Predictor::fit(p.predictor, &train)?;

    // Candidates come from the clean distribution; only points the model
    // already classifies like the Bayes rule are attacked.
    let pool = sample(
        &p.spec.with_seed(derive_seed(cell_seed, &[2])),
        4 * p.queries,
    )?;
    let mut picked = Vec::with_capacity(p.queries);
    for i in 0..pool.len() {
        if picked.len() == p.queries {
            break;
        }
        let x = pool.x.row(i);
        if p.spec.bayes_predict(x) == Some(model.label(x)?) {
            picked.push(i);
        }
    }

    picked
        .par_iter()
        .enumerate()
        .map(|(qi, &i)| {
            let x = pool.x.row(i);
            let pred = model.label(x)?;
            let (target, d) = corrupted
                .iter()
                .filter(|&&j| train.y[j] != pred)
                .map(|&j| (j, dist(x, train.x.row(j))))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .ok_or(LabError::NoCorruptedNeighbor)?;
            let dir: Vec<f64> = x
                .iter()
                .zip(train.x.row(target))
                .map(|(a, b)| (b - a) / d)
                .collect();
            let radius = flip_radius(&model, x, &dir, pred, d, p.scan_steps, p.tol)?;
            let (flip_radius, success) = match radius {
                Some(r) => (r, model.label(&shifted(x, &dir, r))? != pred),
                None => (d, false),
            };
            let mut rng = substream(cell_seed, &[tag::PERTURB, qi as u64]);
            let mut flips = 0;
            for _ in 0..p.random_dirs {
                let mut u: Vec<f64> = (0..x.len())
                    .map(|_| StandardNormal.sample(&mut rng))
                    .collect();
                let nu = norm(&u);
                u.iter_mut().for_each(|v| *v /= nu);
                if model.label(&shifted(x, &u, flip_radius))? != pred {
                    flips += 1;
                }
            }
            Ok(RaisinQuery {
                n,
                rep,
                query: qi,
                clean_pred: pred,
                corrupted_dist: d,
                flip_radius,
                success,
                random_flip_frac: flips as f64 / p.random_dirs as f64,
            })
        })
        .collect()
}

fn shifted(x: &[f64], dir: &[f64], t: f64) -> Vec<f64> {
    x.iter().zip(dir).map(|(a, u)| a + t * u).collect()
}

/// Smallest `t ∈ (0, reach]` at which the label along `x + t·dir` differs
/// from `pred`: a uniform scan locates the first flipping step, bisection
/// narrows it to `tol`.
fn flip_radius(
    model: &Predictor,
    x: &[f64],
    dir: &[f64],
    pred: f64,
    reach: f64,
    steps: usize,
    tol: f64,
) -> Result<Option<f64>, LabError> {
    let flips =
        |t: f64| -> Result<bool, LabError> { Ok(model.label(&shifted(x, dir, t))? != pred) };
    let mut lo = 0.0;
    let mut hi = None;
    for k in 1..=steps {
        let t = reach * k as f64 / steps as f64;
        if flips(t)? {
            hi = Some(t);
            break;
        }
        lo = t;
    }
    let Some(mut hi) = hi else { return Ok(None) };
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if flips(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(hi))
}

pub(super) fn run_from_config(cfg: &ExperimentConfig) -> Result<RunOutput, LabError> {
    let p = RaisinParams::from_config(cfg)?;
    let report = run_raisin_search(&p)?;
    let prov = Provenance::of(Experiment::Raisin, &p, p.seed);
    let mut summary: Vec<String> = p
        .n_grid
        .iter()
        .map(|&n| {
            let meds: Vec<f64> = report
                .summary
                .iter()
                .filter(|s| s.n == n)
                .map(|s| s.median_radius)
                .collect();
            format!(
                "n={n}: median flip radius {:.4} (median over replicates)",
                median(&meds)
            )
        })
        .collect();
    let (hit, random) = report.overall_rates();
    summary.push(format!(
        "targeted flip rate {hit:.3}, random flip rate at equal norm {random:.3}"
    ));
    Ok(RunOutput {
        artifacts: vec![Artifact {
            file_name: "raisin.csv".into(),
            contents: render_csv(&prov, RaisinReport::CSV_HEADER, &report.csv_lines()),
        }],
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(predictor: &str, q: f64) -> RaisinParams {
        let cfg = ExperimentConfig::from_toml_str(&format!(
            "model.predictor = \"{predictor}\"\ndata.q = {q}\nsweep.n = [60, 240]\nsweep.seeds = 2\nsweep.queries = 12\n"
        ))
        .unwrap();
        RaisinParams::from_config(&cfg).unwrap()
    }

    #[test]
    fn one_nn_flips_before_reaching_the_corrupted_point() {
        let rep = run_raisin_search(&params("knn", 0.3)).unwrap();
        assert!(!rep.queries.is_empty());
        for q in &rep.queries {
            assert!(q.success);
            assert!(q.flip_radius >= 0.0);
            assert!(q.flip_radius <= q.corrupted_dist + 1e-12);
        }
    }

    #[test]
    fn kernel_attack_verifies_flips() {
        let rep = run_raisin_search(&params("kernel", 0.3)).unwrap();
        assert_eq!(rep.summary.len(), 4);
        for q in &rep.queries {
            assert!(q.success, "{q:?}");
            assert!(q.flip_radius > 0.0 && q.flip_radius <= q.corrupted_dist);
            assert!((0.0..=1.0).contains(&q.random_flip_frac));
        }
        assert_eq!(rep, run_raisin_search(&params("kernel", 0.3)).unwrap());
    }

    #[test]
    fn clean_labels_have_no_raisins() {
        assert!(matches!(
            run_raisin_search(&params("knn", 0.0)),
            Err(LabError::NoCorruptedNeighbor)
        ));
    }
}

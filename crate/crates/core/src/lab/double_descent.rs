use super::config::{check_unit_interval, positive};
use super::{
    bandwidth_for, config_err, default_bandwidth, render_csv, train_test, Artifact, Experiment,
    ExperimentConfig, LabError, Provenance, RunOutput,
};
use crate::datagen::{corrupt, CorruptionSpec, DistributionSpec, Family};
use crate::kernelmach::{double_descent_sweep, CurveRecord, SweepConfig, SweepResult};
use crate::rng::derive_seed;

#[derive(Debug, Clone, PartialEq)]
pub struct DoubleDescentParams {
    pub spec: DistributionSpec,
    pub n_train: usize,
    pub n_test: usize,
    /// Label noise on the training set; the test set is clean.
    pub q: f64,
    pub m_grid: Vec<usize>,
    pub replicates: usize,
    /// `None` selects the median pairwise training distance.
    pub bandwidth: Option<f64>,
    pub seed: u64,
}

impl DoubleDescentParams {
    pub fn default_family() -> Family {
        Family::TwoGaussians {
            dim: 5,
            separation: 2.0,
            scale: 1.0,
        }
    }

    /// Feature counts from `n/10` to `10n` for `n = 300`, dense around the
    /// threshold at `m = n/2`.
    pub fn default_grid() -> Vec<usize> {
        vec![
            30, 60, 90, 120, 135, 150, 165, 180, 225, 300, 450, 600, 900, 1200, 1500, 2100, 3000,
        ]
    }

    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self, LabError> {
        let seed = cfg.seed();
        let spec = cfg.data.distribution_or(&Self::default_family(), seed)?;
        let m_grid = cfg.sweep.m.clone().unwrap_or_else(Self::default_grid);
        if m_grid.is_empty() {
            return config_err("sweep.m is empty");
        }
        Ok(Self {
            bandwidth: default_bandwidth(cfg, &spec),
            spec,
            n_train: positive("data.n_train", cfg.data.n_train.unwrap_or(300))?,
            n_test: positive("data.n_test", cfg.data.n_test.unwrap_or(2000))?,
            q: check_unit_interval("data.q", cfg.data.q.unwrap_or(0.0))?,
            m_grid,
            replicates: positive("sweep.seeds", cfg.sweep.seeds.unwrap_or(10))?,
            seed,
        })
    }
}

#[derive(Debug, Clone)]
pub struct DoubleDescentRun {
    pub sweep: SweepResult,
    pub analysis: DoubleDescentAnalysis,
}

/// Shape checks on a sweep: risk above vs. well past the threshold, and
/// where the coefficient norm peaks.
#[derive(Debug, Clone, PartialEq)]
pub struct DoubleDescentAnalysis {
    /// Per replicate: test 0-1 risk at its threshold exceeds the risk at the
    /// grid point nearest ten times the threshold. `None` without a threshold.
    pub risk_drop: Vec<Option<bool>>,
    /// `m` maximizing the replicate-mean coefficient norm.
    pub norm_peak_m: usize,
    /// The mean-norm peak is within one grid step of the mean-curve threshold.
    pub peak_near_threshold: bool,
    /// Replicates whose own norm peak is within one grid step of their threshold.
    pub rep_peaks_near_threshold: usize,
    /// After its peak the mean norm never rises by more than one stderr.
    pub norm_nonincreasing_after_peak: bool,
}

impl DoubleDescentAnalysis {
    pub fn of(sweep: &SweepResult) -> Self {
        let grid: Vec<usize> = sweep.curve.iter().map(|p| p.m).collect();
        let g = grid.len();
        let reps = sweep.rep_thresholds.len();
        let rows = |rep: usize| &sweep.records[rep * g..(rep + 1) * g];

        let risk_drop = (0..reps)
            .map(|rep| {
                let t = sweep.rep_thresholds[rep]?;
                let ti = grid.iter().position(|&m| m == t)?;
                let far = nearest_index(&grid, 10 * t);
                Some(rows(rep)[ti].test_01 > rows(rep)[far].test_01)
            })
            .collect();

        let norms: Vec<f64> = sweep.curve.iter().map(|p| p.coeff_norm.mean).collect();
        let peak = argmax(&norms);
        let peak_near_threshold = sweep
            .threshold
            .and_then(|t| grid.iter().position(|&m| m == t))
            .is_some_and(|ti| ti.abs_diff(peak) <= 1);
        let rep_peaks_near_threshold = (0..reps)
            .filter(|&rep| {
                let Some(ti) =
                    sweep.rep_thresholds[rep].and_then(|t| grid.iter().position(|&m| m == t))
                else {
                    return false;
                };
                let own: Vec<f64> = rows(rep).iter().map(|r| r.coeff_norm).collect();
                argmax(&own).abs_diff(ti) <= 1
            })
            .count();
        let norm_nonincreasing_after_peak = sweep.curve[peak..].windows(2).all(|w| {
            let slack = w[0].coeff_norm.stderr.max(w[1].coeff_norm.stderr);
            w[1].coeff_norm.mean <= w[0].coeff_norm.mean + slack
        });

        Self {
            risk_drop,
            norm_peak_m: grid[peak],
            peak_near_threshold,
            rep_peaks_near_threshold,
            norm_nonincreasing_after_peak,
        }
    }

    pub fn risk_drop_count(&self) -> usize {
        self.risk_drop.iter().filter(|d| **d == Some(true)).count()
    }
}

fn nearest_index(grid: &[usize], target: usize) -> usize {
    (0..grid.len())
        .min_by_key(|&i| grid[i].abs_diff(target))
        .expect("nonempty grid")
}

fn argmax(v: &[f64]) -> usize {
    (0..v.len())
        .max_by(|&a, &b| v[a].total_cmp(&v[b]))
        .expect("nonempty")
}

pub fn run_double_descent(p: &DoubleDescentParams) -> Result<DoubleDescentRun, LabError> {
    let seeds = (derive_seed(p.seed, &[0]), derive_seed(p.seed, &[2]));
    let (train, test) = train_test(&p.spec, p.n_train, p.n_test, seeds)?;
    let train = corrupt(
        &train,
        &CorruptionSpec::new(p.q, derive_seed(p.seed, &[1]))?,
    )?;
    let sweep = double_descent_sweep(
        &train,
        &test,
        &SweepConfig {
            m_grid: p.m_grid.clone(),
            replicates: p.replicates,
            bandwidth: bandwidth_for(p.bandwidth, &train),
            seed: derive_seed(p.seed, &[3]),
        },
    )?;
    let analysis = DoubleDescentAnalysis::of(&sweep);
    Ok(DoubleDescentRun { sweep, analysis })
}

pub const CSV_HEADER: &str = "m,rep,train_mse,test_mse,test_01,coeff_norm,threshold_flag,threshold";

fn csv_lines(sweep: &SweepResult) -> Vec<String> {
    sweep
        .records
        .iter()
        .map(|r: &CurveRecord| {
            let t = sweep.rep_thresholds[r.rep].map_or(String::new(), |t| t.to_string());
            format!("{},{t}", r.to_csv_row())
        })
        .collect()
}

fn plot_script(csv_name: &str, threshold: Option<usize>) -> String {
    let marker = threshold.map_or(String::new(), |t| {
        format!("set arrow from {t}, graph 0 to {t}, graph 1 nohead dashtype 2\n")
    });
    format!(
        "# gnuplot script: gnuplot double_descent.gp\n\
         set datafile separator ','\n\
         set terminal pngcairo size 900,600\n\
         set output 'double_descent.png'\n\
         set logscale x\n\
         set xlabel 'random features m'\n\
         set ylabel 'test 0-1 risk'\n\
         set y2label 'coefficient norm'\n\
         set logscale y2\n\
         set ytics nomirror\n\
         set y2tics\n\
         {marker}\
         plot '{csv_name}' skip 2 using 1:5 axes x1y1 with points pt 7 ps 0.5 title 'test 0-1 risk', \\\n\
         \x20    '{csv_name}' skip 2 using 1:6 axes x1y2 with points pt 6 ps 0.5 title 'coefficient norm'\n"
    )
}

pub(super) fn run_from_config(cfg: &ExperimentConfig) -> Result<RunOutput, LabError> {
    let p = DoubleDescentParams::from_config(cfg)?;
    let run = run_double_descent(&p)?;
    let prov = Provenance::of(Experiment::DoubleDescent, &p, p.seed);
    let a = &run.analysis;
    let summary = vec![
        format!(
            "interpolation threshold (mean curve): {:?}",
            run.sweep.threshold
        ),
        format!("coefficient norm peaks at m = {}", a.norm_peak_m),
        format!(
            "risk at threshold above risk at 10x threshold in {}/{} replicates",
            a.risk_drop_count(),
            p.replicates
        ),
    ];
    Ok(RunOutput {
        artifacts: vec![
            Artifact {
                file_name: "double_descent.csv".into(),
                contents: render_csv(&prov, CSV_HEADER, &csv_lines(&run.sweep)),
            },
            Artifact {
                file_name: "double_descent.gp".into(),
                contents: plot_script("double_descent.csv", run.sweep.threshold),
            },
        ],
        summary,
    })
}

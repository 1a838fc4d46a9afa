use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::config::positive;
use super::{
    render_csv, sign, Artifact, Experiment, ExperimentConfig, LabError, Provenance, RunOutput,
};
use crate::datagen::{sample, DistributionSpec, Family};
use crate::kernelmach::MeanStderr;
use crate::netmodels::{Activation, MlpModel};
use crate::optim::{gd, DescentConfig, Loss, Objective, ParamModel};
use crate::rng::derive_seed;

/// Same network, same initialization, same budget; only the loss differs.
#[derive(Debug, Clone, PartialEq)]
pub struct LossCompareParams {
    pub spec: DistributionSpec,
    pub n_train: usize,
    pub n_test: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub step: f64,
    pub iters: usize,
    pub replicates: usize,
    pub seed: u64,
}

impl LossCompareParams {
    /// Classes about eight standard deviations apart: separable in practice.
    pub fn default_family() -> Family {
        Family::TwoGaussians {
            dim: 5,
            separation: 8.0,
            scale: 1.0,
        }
    }

    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self, LabError> {
        let seed = cfg.seed();
        let hidden = cfg.model.hidden.clone().unwrap_or_else(|| vec![32]);
        for &h in &hidden {
            positive("model.hidden", h)?;
        }
        let step = cfg.model.step.unwrap_or(0.5);
        if !(step > 0.0 && step.is_finite()) {
            return super::config_err("model.step must be positive");
        }
        Ok(Self {
            spec: cfg.data.distribution_or(&Self::default_family(), seed)?,
            n_train: positive("data.n_train", cfg.data.n_train.unwrap_or(200))?,
            n_test: positive("data.n_test", cfg.data.n_test.unwrap_or(1000))?,
            hidden,
            activation: cfg.model.activation_or(Activation::Tanh)?,
            step,
            iters: positive("model.iters", cfg.model.iters.unwrap_or(300))?,
            replicates: positive("sweep.seeds", cfg.sweep.seeds.unwrap_or(5))?,
            seed,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossArm {
    pub rep: usize,
    pub loss: Loss,
    /// Hex SHA-256 prefix of the initial parameters.
    pub init_hash: String,
    pub train_acc: f64,
    pub test_acc: f64,
    pub final_loss: f64,
    /// Smallest `y·f(x)` over the training set at the end of training.
    pub min_margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossSummary {
    pub loss: Loss,
    pub test_acc: MeanStderr,
    pub train_acc: MeanStderr,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossCompareReport {
    /// Square arm then cross-entropy arm for each replicate.
    pub arms: Vec<LossArm>,
    pub summary: Vec<LossSummary>,
}

impl LossCompareReport {
    pub const CSV_HEADER: &'static str =
        "seed,loss,init_hash,train_acc,test_acc,final_loss,min_margin";

    pub fn csv_lines(&self) -> Vec<String> {
        self.arms
            .iter()
            .map(|a| {
                format!(
                    "{},{},{},{:.6},{:.6},{:.6e},{:.6}",
                    a.rep,
                    loss_name(a.loss),
                    a.init_hash,
                    a.train_acc,
                    a.test_acc,
                    a.final_loss,
                    a.min_margin
                )
            })
            .collect()
    }
}

pub(crate) fn loss_name(l: Loss) -> &'static str {
    match l {
        Loss::Square => "square",
        Loss::CrossEntropy => "cross_entropy",
    }
}

pub(crate) fn params_hash(w: &[f64]) -> String {
    let mut h = Sha256::new();
    for v in w {
        h.update(v.to_le_bytes());
    }
    h.finalize()
        .iter()
        .take(8)
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn run_loss_comparison(p: &LossCompareParams) -> Result<LossCompareReport, LabError> {
    let jobs: Vec<(usize, Loss)> = (0..p.replicates)
        .flat_map(|r| [(r, Loss::Square), (r, Loss::CrossEntropy)])
        .collect();
    let arms = jobs
        .par_iter()
        .map(|&(rep, loss)| {
            let r = rep as u64;
            let train = sample(&p.spec.with_seed(derive_seed(p.seed, &[r, 0])), p.n_train)?;
            let test = sample(&p.spec.with_seed(derive_seed(p.seed, &[r, 1])), p.n_test)?;
            let model = MlpModel::new(train.dim(), p.hidden.clone(), p.activation)?;
            let w0 = model.init_params(derive_seed(p.seed, &[r, 2]));
            let obj = Objective::new(&model, &train, loss)?;
            let trace = gd(
                &obj,
                &w0,
                &DescentConfig::new(p.step, p.iters).record_every(p.iters),
            )?;
            let acc = |x: &crate::Matrix, y: &[f64]| {
                let hits = (0..y.len())
                    .filter(|&i| sign(model.value(&trace.w, x.row(i))) == y[i])
                    .count();
                hits as f64 / y.len() as f64
            };
            let min_margin = (0..train.len())
                .map(|i| train.y[i] * model.value(&trace.w, train.x.row(i)))
                .fold(f64::INFINITY, f64::min);
            Ok(LossArm {
                rep,
                loss,
                init_hash: params_hash(&w0),
                train_acc: acc(&train.x, &train.y),
                test_acc: acc(&test.x, &test.y),
                final_loss: trace.final_loss(),
                min_margin,
            })
        })
        .collect::<Result<Vec<_>, LabError>>()?;

    let summary = [Loss::Square, Loss::CrossEntropy]
        .into_iter()
        .map(|loss| {
            let pick = |f: fn(&LossArm) -> f64| -> Vec<f64> {
                arms.iter().filter(|a| a.loss == loss).map(f).collect()
            };
            LossSummary {
                loss,
                test_acc: MeanStderr::of(&pick(|a| a.test_acc)),
                train_acc: MeanStderr::of(&pick(|a| a.train_acc)),
            }
        })
        .collect();
    Ok(LossCompareReport { arms, summary })
}

pub(super) fn run_from_config(cfg: &ExperimentConfig) -> Result<RunOutput, LabError> {
    let p = LossCompareParams::from_config(cfg)?;
    let report = run_loss_comparison(&p)?;
    let prov = Provenance::of(Experiment::LossCompare, &p, p.seed);
    let summary = report
        .summary
        .iter()
        .map(|s| {
            format!(
                "{}: test accuracy {:.4} ± {:.4}, train accuracy {:.4}",
                loss_name(s.loss),
                s.test_acc.mean,
                s.test_acc.stderr,
                s.train_acc.mean
            )
        })
        .collect();
    Ok(RunOutput {
        artifacts: vec![Artifact {
            file_name: "loss_compare.csv".into(),
            contents: render_csv(&prov, LossCompareReport::CSV_HEADER, &report.csv_lines()),
        }],
        summary,
    })
}

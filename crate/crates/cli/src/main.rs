use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use interplab::lab::{self, Experiment, ExperimentConfig, LabError};

/// Reproducible experiments on interpolating predictors.
#[derive(Parser, Debug)]
#[command(name = "interplab", version)]
struct Cli {
    /// TOML config file; keys not given fall back to experiment defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, overriding the config [default: results/<experiment>].
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads [default: all cores].
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Interpolating kernel machines on label-corrupted data.
    NoiseInterp,
    /// Random Fourier feature sweep across the interpolation threshold.
    DoubleDescent,
    /// Adversarial perturbations toward label-corrupted training points.
    Raisin,
    /// Square vs. cross-entropy loss on the same network.
    LossCompare,
    /// Disagreement volume of the simplicial interpolant on a simplex.
    Simplex,
    /// Iterations-to-target of mini-batch SGD across batch sizes.
    SgdScaling,
    /// Hessian norm and tangent-kernel drift across network widths.
    Linearity,
}

impl Command {
    fn experiment(self) -> Experiment {
        match self {
            Command::NoiseInterp => Experiment::NoiseInterp,
            Command::DoubleDescent => Experiment::DoubleDescent,
            Command::Raisin => Experiment::Raisin,
            Command::LossCompare => Experiment::LossCompare,
            Command::Simplex => Experiment::Simplex,
            Command::SgdScaling => Experiment::SgdScaling,
            Command::Linearity => Experiment::Linearity,
        }
    }
}

/// Marks failures that stem from the user's configuration.
#[derive(Debug)]
struct ConfigProblem;

impl std::fmt::Display for ConfigProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("invalid configuration")
    }
}

impl std::error::Error for ConfigProblem {}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let exp = cli.command.experiment();
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))
                .context(ConfigProblem)?;
            ExperimentConfig::from_toml_str(&text)
                .with_context(|| format!("parsing {}", path.display()))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(named) = cfg.experiment {
        if named != exp {
            return Err(anyhow::Error::new(ConfigProblem).context(format!(
                "config is for `{}` but the subcommand is `{}`",
                named.name(),
                exp.name()
            )));
        }
    }
    cfg.experiment = Some(exp);
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if cli.out.is_some() {
        cfg.out.clone_from(&cli.out);
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(anyhow::Error::new(ConfigProblem).context("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    let cfg = load_config(cli)?;
    let exp = cli.command.experiment();
    let out_dir = cfg
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("results").join(exp.name()));

    let output = lab::run(&cfg)?;

    fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    for a in &output.artifacts {
        let path = out_dir.join(&a.file_name);
        fs::write(&path, &a.contents).with_context(|| format!("writing {}", path.display()))?;
        println!("wrote {}", path.display());
    }
    for line in &output.summary {
        println!("{line}");
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<ConfigProblem>().is_some() || err.chain().any(|e| e.is::<ConfigProblem>())
    {
        return 2;
    }
    match err.chain().find_map(|e| e.downcast_ref::<LabError>()) {
        Some(e) if e.is_config_error() => 2,
        Some(_) => 3,
        None => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

//! The `wdro` command line: argument definitions and command dispatch.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use wdro::datagen::{stream_rng, MlgGenerator, MlrGenerator, OutlierSpec};
use wdro::harness::{cv_tune, fit_method, run_experiment, ExperimentConfig, FitOptions, Hyper};
use wdro::metrics::{evaluate, mpd, EvalOptions, DEFAULT_ALPHA, DEFAULT_DELTA};
use wdro::{Dataset, Family, FittedModel, MethodKind, NormOrder, SolverConfig, Task};

#[derive(Parser)]
#[command(name = "wdro", version, about = "Wasserstein DRO regression and classification")]
pub struct Cli {
    /// Random seed (data generation, fold shuffles; overrides an experiment config's seed).
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum GenKind {
    MlrResponse,
    MlrCovariate,
    MlgCovariate,
}

#[derive(Clone, Copy, ValueEnum)]
enum Split {
    Train,
    Test,
}

impl Split {
    fn tag(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset as CSV.
    ///
    /// The true coefficients depend on the seed only, so the train and test
    /// splits of one seed come from the same model (and match run 0 of an
    /// experiment with that seed).
    Gen {
        #[arg(long, value_enum)]
        kind: GenKind,
        /// Which sample stream of the seed to draw from.
        #[arg(long, value_enum, default_value = "train")]
        split: Split,
        #[arg(short = 'p', long, default_value_t = 5)]
        p: usize,
        #[arg(short = 'k', long, default_value_t = 3)]
        k: usize,
        #[arg(short = 'n', long, default_value_t = 100)]
        n: usize,
        /// Fraction of contaminated rows.
        #[arg(long, default_value_t = 0.0)]
        fraction: f64,
        /// Output file; stdout when omitted.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Fit a model to a dataset CSV and write it as JSON.
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        method: MethodKind,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        components: Option<usize>,
        /// Wasserstein norm order (a number >= 1 or "inf").
        #[arg(long, default_value = "2")]
        r: NormOrder,
        /// Solver settings as JSON.
        #[arg(long)]
        solver: Option<PathBuf>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a fitted model on a test set.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Training set; required for regression models.
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_ALPHA)]
        alpha: f64,
        #[arg(long, default_value_t = DEFAULT_DELTA)]
        delta: f64,
        /// Keep the per-sample losses in the output.
        #[arg(long)]
        per_sample: bool,
    },
    /// Cross-validate a method's hyperparameter and print the outcome.
    Tune {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        method: MethodKind,
        /// Comma-separated candidate values; the experiment defaults when omitted.
        #[arg(long, value_delimiter = ',')]
        grid: Vec<f64>,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        #[arg(long, default_value = "2")]
        r: NormOrder,
        #[arg(long)]
        solver: Option<PathBuf>,
    },
    /// Run an experiment described by a JSON config.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        /// Directory receiving results.csv and summary.json.
        #[arg(short, long)]
        out: PathBuf,
        /// Worker threads; all cores when omitted.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Print the minimal perturbation distance of a classifier on a dataset.
    Mpd {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
}

fn read_dataset(path: &Path, task: Task) -> Result<Dataset> {
    let file = fs::File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Dataset::read_csv(io::BufReader::new(file), task).with_context(|| format!("{}", path.display()))
}

fn read_model(path: &Path) -> Result<FittedModel> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    FittedModel::from_json(&text).with_context(|| format!("{}", path.display()))
}

fn read_solver(path: Option<&Path>) -> Result<SolverConfig> {
    let Some(path) = path else {
        return Ok(SolverConfig::default());
    };
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let cfg: SolverConfig = serde_json::from_str(&text).with_context(|| format!("{}", path.display()))?;
    cfg.validate().with_context(|| format!("{}", path.display()))?;
    Ok(cfg)
}

fn task_of(method: MethodKind) -> Task {
    match method.family() {
        Family::Mlr => Task::Regression,
        Family::Mlg => Task::Classification,
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("cannot write {}", path.display())),
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn hyper_for(method: MethodKind, epsilon: Option<f64>, lambda: Option<f64>, components: Option<usize>) -> Result<Hyper> {
    Ok(match method {
        MethodKind::Ols | MethodKind::MlgVanilla => Hyper::None,
        MethodKind::RidgeMlr | MethodKind::MlgRidge | MethodKind::MlgLasso => {
            Hyper::Lambda(lambda.context("--lambda is required for this method")?)
        }
        MethodKind::Pcr | MethodKind::MlgPcc => Hyper::Components(components.context("--components is required for this method")?),
        _ => Hyper::Epsilon(epsilon.context("--epsilon is required for this method")?),
    })
}

/// Executes one parsed command line.
pub fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed;
    match cli.command {
        Command::Gen {
            kind,
            split,
            p,
            k,
            n,
            fraction,
            out,
        } => {
            let seed = seed.unwrap_or(0);
            let mut truth = stream_rng(seed, 0, "truth");
            let mut rng = stream_rng(seed, 0, split.tag());
            let data = match kind {
                GenKind::MlrResponse => {
                    MlrGenerator::new(p, k, &mut truth)?.sample(n, &OutlierSpec::mlr_response(fraction)?, &mut rng)?
                }
                GenKind::MlrCovariate => {
                    MlrGenerator::new(p, k, &mut truth)?.sample(n, &OutlierSpec::mlr_covariate(fraction)?, &mut rng)?
                }
                GenKind::MlgCovariate => {
                    MlgGenerator::new(p, k, &mut truth)?.sample(n, &OutlierSpec::mlg_covariate(fraction)?, &mut rng)?
                }
            };
            let mut buf = Vec::new();
            data.write_csv(&mut buf)?;
            emit(out.as_deref(), std::str::from_utf8(&buf)?)
        }
        Command::Fit {
            data,
            method,
            epsilon,
            lambda,
            components,
            r,
            solver,
            out,
        } => {
            let train = read_dataset(&data, task_of(method))?;
            let hyper = hyper_for(method, epsilon, lambda, components)?;
            let opts = FitOptions {
                r,
                solver: read_solver(solver.as_deref())?,
            };
            let mut model = fit_method(&train, method, hyper, &opts)?;
            model.seed = seed;
            emit(out.as_deref(), &(model.to_json()? + "\n"))
        }
        Command::Eval {
            model,
            data,
            train,
            alpha,
            delta,
            per_sample,
        } => {
            let model = read_model(&model)?;
            let task = task_of(model.kind);
            let test = read_dataset(&data, task)?;
            let train = train.map(|p| read_dataset(&p, task)).transpose()?;
            if task == Task::Regression && train.is_none() {
                bail!("--train is required to evaluate a regression model");
            }
            let mut report = evaluate(&model, train.as_ref(), &test, &EvalOptions { alpha, delta })?;
            if !per_sample {
                report.per_sample_loss.clear();
            }
            emit(None, &(serde_json::to_string_pretty(&report)? + "\n"))
        }
        Command::Tune {
            data,
            method,
            grid,
            folds,
            r,
            solver,
        } => {
            let train = read_dataset(&data, task_of(method))?;
            let mut defaults = ExperimentConfig::table1(0);
            defaults.p = train.p();
            let candidates: Vec<Hyper> = if grid.is_empty() {
                defaults.candidates(method)
            } else {
                match method {
                    MethodKind::Ols | MethodKind::MlgVanilla => vec![Hyper::None],
                    MethodKind::RidgeMlr | MethodKind::MlgRidge | MethodKind::MlgLasso => {
                        grid.iter().map(|&v| Hyper::Lambda(v)).collect()
                    }
                    MethodKind::Pcr | MethodKind::MlgPcc => grid
                        .iter()
                        .map(|&v| {
                            if v >= 1.0 && v.fract() == 0.0 {
                                Ok(Hyper::Components(v as usize))
                            } else {
                                bail!("component counts must be positive integers, got {v}")
                            }
                        })
                        .collect::<Result<_>>()?,
                    _ => grid.iter().map(|&v| Hyper::Epsilon(v)).collect(),
                }
            };
            let opts = FitOptions {
                r,
                solver: read_solver(solver.as_deref())?,
            };
            let outcome = cv_tune(&train, method, &candidates, folds, seed.unwrap_or(0), &opts)?;
            emit(None, &(serde_json::to_string_pretty(&outcome)? + "\n"))
        }
        Command::Experiment { config, out, threads } => {
            let text = fs::read_to_string(&config).with_context(|| format!("cannot read {}", config.display()))?;
            let mut cfg: ExperimentConfig =
                serde_json::from_str(&text).with_context(|| format!("{}", config.display()))?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            cfg.validate().with_context(|| format!("{}", config.display()))?;
            let report = match threads {
                Some(n) => rayon_pool(n)?.install(|| run_experiment(&cfg))?,
                None => run_experiment(&cfg)?,
            };
            let (csv, json) = report.write_to_dir(&out)?;
            let failures = report.rows.iter().filter(|r| r.error.is_some()).count();
            println!("{}", csv.display());
            println!("{}", json.display());
            if failures > 0 {
                eprintln!("warning: {failures} of {} rows failed; see summary.json", report.rows.len());
            }
            Ok(())
        }
        Command::Mpd { model, data } => {
            let model = read_model(&model)?;
            if model.family() != Family::Mlg {
                bail!("MPD is defined for classifiers only, got {}", model.kind);
            }
            let test = read_dataset(&data, Task::Classification)?;
            println!("{:?}", mpd(&model, test.x().view())?);
            Ok(())
        }
    }
}

fn rayon_pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .context("cannot start worker threads")
}

/// Parses `args`, program name first, and runs the command.
pub fn run_from<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    run(Cli::try_parse_from(args)?)
}

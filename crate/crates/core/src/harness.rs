//! Experiment orchestration: cross-validated hyperparameter selection,
//! multi-run replications and CSV/JSON reports.
//!
//! Every random quantity is drawn from a named stream of `(seed, run)`, and
//! parallel tasks are merged in `(run, fraction, method)` order, so a
//! configuration always produces the same bytes regardless of the number of
//! worker threads.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::warn;
use rand::seq::SliceRandom;
use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{fit_baseline, fit_ols, BaselineConfig};
use crate::datagen::{stream_rng, MlgGenerator, MlrGenerator, OutlierSpec};
use crate::dataset::{Dataset, Task};
use crate::dro::{fit_dro, DroConfig};
use crate::error::{Error, Result};
use crate::losses::logloss_per_sample;
use crate::metrics::{evaluate, train_error_cov, wmse, EvalOptions, MetricReport, DEFAULT_ALPHA, DEFAULT_DELTA};
use crate::model::{Family, FittedModel, MethodKind};
use crate::norms::NormOrder;
use crate::solver::SolverConfig;

/// Header of the results CSV.
pub const RESULTS_HEADER: [&str; 13] = [
    "run",
    "seed",
    "fraction",
    "method",
    "wmse",
    "cvar_wmse",
    "ccr",
    "logloss",
    "cvar_logloss",
    "mpd",
    "bound",
    "epsilon",
    "lambda",
];

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.log10(), hi.log10());
            (0..n)
                .map(|i| 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64))
                .collect()
        }
    }
}

fn default_epsilon_grid() -> Vec<f64> {
    log_grid(1e-4, 1.0, 10)
}

fn default_lambda_grid() -> Vec<f64> {
    log_grid(1e-4, 1e2, 10)
}

fn default_folds() -> usize {
    5
}

fn default_r() -> NormOrder {
    NormOrder::TWO
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

fn default_delta() -> f64 {
    DEFAULT_DELTA
}

/// Which simulation study to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    MlrResponseOutliers,
    MlrCovariateOutliers,
    MlgCovariateOutliers,
}

impl ExperimentKind {
    pub fn family(self) -> Family {
        match self {
            ExperimentKind::MlrResponseOutliers | ExperimentKind::MlrCovariateOutliers => Family::Mlr,
            ExperimentKind::MlgCovariateOutliers => Family::Mlg,
        }
    }

    pub fn outliers(self, fraction: f64) -> Result<OutlierSpec> {
        match self {
            ExperimentKind::MlrResponseOutliers => OutlierSpec::mlr_response(fraction),
            ExperimentKind::MlrCovariateOutliers => OutlierSpec::mlr_covariate(fraction),
            ExperimentKind::MlgCovariateOutliers => OutlierSpec::mlg_covariate(fraction),
        }
    }

    /// Test-set contamination for regression, training-set contamination
    /// for classification.
    pub fn default_placement(self) -> Placement {
        match self.family() {
            Family::Mlr => Placement::Test,
            Family::Mlg => Placement::Train,
        }
    }
}

/// The split that receives the outliers; the other one stays clean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Placement {
    Train,
    Test,
}

/// JSON experiment description. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub p: usize,
    #[serde(rename = "K", alias = "k")]
    pub k: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub outlier_fractions: Vec<f64>,
    pub n_runs: usize,
    pub seed: u64,
    pub methods: Vec<MethodKind>,
    #[serde(default = "default_epsilon_grid")]
    pub epsilon_grid: Vec<f64>,
    #[serde(default = "default_lambda_grid")]
    pub lambda_grid: Vec<f64>,
    /// Fixed component count for PCR/PCC; cross-validated over `1..=p`
    /// when absent.
    #[serde(default)]
    pub n_components: Option<usize>,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default)]
    pub placement: Option<Placement>,
    /// Wasserstein norm order of the robust methods.
    #[serde(default = "default_r")]
    pub r: NormOrder,
    #[serde(default)]
    pub intercept: bool,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
}

impl ExperimentConfig {
    /// The paper-scale classification study: `p = 5`, `K = 3`, 100/60
    /// samples, 20% training outliers, 10 runs, all six classifiers.
    pub fn table1(seed: u64) -> Self {
        ExperimentConfig {
            kind: ExperimentKind::MlgCovariateOutliers,
            p: 5,
            k: 3,
            n_train: 100,
            n_test: 60,
            outlier_fractions: vec![0.2],
            n_runs: 10,
            seed,
            methods: vec![
                MethodKind::MlgSr,
                MethodKind::Mlg1s,
                MethodKind::MlgVanilla,
                MethodKind::MlgRidge,
                MethodKind::MlgLasso,
                MethodKind::MlgPcc,
            ],
            epsilon_grid: default_epsilon_grid(),
            lambda_grid: default_lambda_grid(),
            n_components: None,
            folds: default_folds(),
            placement: None,
            r: NormOrder::TWO,
            intercept: false,
            solver: SolverConfig::default(),
            alpha: DEFAULT_ALPHA,
            delta: DEFAULT_DELTA,
        }
    }

    /// The regression study with outlier fractions `0, 0.1, …, 0.4` in the
    /// test set.
    pub fn mlr(kind: ExperimentKind, seed: u64) -> Self {
        ExperimentConfig {
            kind,
            outlier_fractions: vec![0.0, 0.1, 0.2, 0.3, 0.4],
            methods: vec![
                MethodKind::MlrSr,
                MethodKind::Mlr1s,
                MethodKind::Ols,
                MethodKind::RidgeMlr,
                MethodKind::Pcr,
            ],
            ..ExperimentConfig::table1(seed)
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn placement(&self) -> Placement {
        self.placement.unwrap_or_else(|| self.kind.default_placement())
    }

    /// Covariate dimension seen by the estimators.
    pub fn model_p(&self) -> usize {
        self.p + usize::from(self.intercept)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::domain(format!("{field}: {msg}")));
        if self.p == 0 || self.k == 0 {
            return bad("p/K", "dimensions must be >= 1".into());
        }
        if self.folds < 2 {
            return bad("folds", format!("must be >= 2, got {}", self.folds));
        }
        if self.n_runs == 0 {
            return bad("n_runs", "must be >= 1".into());
        }
        if self.n_train < self.folds {
            return bad("n_train", format!("{} samples cannot fill {} folds", self.n_train, self.folds));
        }
        if self.n_test == 0 {
            return bad("n_test", "must be >= 1".into());
        }
        if self.outlier_fractions.is_empty() {
            return bad("outlier_fractions", "must not be empty".into());
        }
        if let Some(f) = self.outlier_fractions.iter().find(|f| !(0.0..=1.0).contains(*f)) {
            return bad("outlier_fractions", format!("{f} outside [0, 1]"));
        }
        if self.methods.is_empty() {
            return bad("methods", "must not be empty".into());
        }
        let mut seen = BTreeSet::new();
        for m in &self.methods {
            if m.family() != self.kind.family() {
                return bad("methods", format!("{m} does not fit a {:?} experiment", self.kind));
            }
            if !seen.insert(m.name()) {
                return bad("methods", format!("{m} listed twice"));
            }
        }
        for (field, grid) in [("epsilon_grid", &self.epsilon_grid), ("lambda_grid", &self.lambda_grid)] {
            if grid.is_empty() {
                return bad(field, "must not be empty".into());
            }
            if let Some(v) = grid.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
                return bad(field, format!("values must be positive, got {v}"));
            }
        }
        if let Some(n) = self.n_components {
            if n == 0 || n > self.model_p() {
                return bad("n_components", format!("must be in 1..={}, got {n}", self.model_p()));
            }
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad("alpha", format!("must lie in (0, 1), got {}", self.alpha));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad("delta", format!("must lie in (0, 1), got {}", self.delta));
        }
        self.solver.validate()
    }

    /// Candidate hyperparameters of `method` under this configuration.
    pub fn candidates(&self, method: MethodKind) -> Vec<Hyper> {
        match method {
            MethodKind::Ols | MethodKind::MlgVanilla => vec![Hyper::None],
            MethodKind::RidgeMlr | MethodKind::MlgRidge | MethodKind::MlgLasso => {
                self.lambda_grid.iter().map(|&l| Hyper::Lambda(l)).collect()
            }
            MethodKind::Pcr | MethodKind::MlgPcc => match self.n_components {
                Some(n) => vec![Hyper::Components(n)],
                None => (1..=self.model_p()).map(Hyper::Components).collect(),
            },
            _ => self.epsilon_grid.iter().map(|&e| Hyper::Epsilon(e)).collect(),
        }
    }

    fn fit_options(&self) -> FitOptions {
        FitOptions {
            r: self.r,
            solver: self.solver.clone(),
        }
    }
}

/// A single hyperparameter value of one of the methods.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hyper {
    None,
    Epsilon(f64),
    Lambda(f64),
    Components(usize),
}

impl Hyper {
    /// Larger means more regularized; used to break ties.
    fn strength(self) -> f64 {
        match self {
            Hyper::None => 0.0,
            Hyper::Epsilon(v) | Hyper::Lambda(v) => v,
            Hyper::Components(n) => -(n as f64),
        }
    }

    pub fn epsilon(self) -> Option<f64> {
        match self {
            Hyper::Epsilon(v) => Some(v),
            _ => None,
        }
    }

    pub fn lambda(self) -> Option<f64> {
        match self {
            Hyper::Lambda(v) => Some(v),
            _ => None,
        }
    }

    pub fn components(self) -> Option<usize> {
        match self {
            Hyper::Components(n) => Some(n),
            _ => None,
        }
    }
}

/// Settings shared by every fit of an experiment.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FitOptions {
    pub r: NormOrder,
    pub solver: SolverConfig,
}

/// Fits `method` with hyperparameter `hyper`.
pub fn fit_method(data: &Dataset, method: MethodKind, hyper: Hyper, opts: &FitOptions) -> Result<FittedModel> {
    let mismatch = || Error::domain(format!("hyperparameter {hyper:?} does not apply to {method}"));
    if let Some(variant) = method.dro_variant() {
        let eps = hyper.epsilon().ok_or_else(mismatch)?;
        let cfg = match method.family() {
            Family::Mlr => DroConfig::mlr(variant, eps)?,
            Family::Mlg => DroConfig::mlg(variant, eps)?,
        }
        .with_r(opts.r);
        return fit_dro(data, &cfg, &opts.solver);
    }
    let base = BaselineConfig::new(method);
    let cfg = match (method, hyper) {
        (MethodKind::Ols | MethodKind::MlgVanilla, Hyper::None) => base,
        (MethodKind::RidgeMlr | MethodKind::MlgRidge | MethodKind::MlgLasso, Hyper::Lambda(l)) => base.with_lambda(l),
        (MethodKind::Pcr | MethodKind::MlgPcc, Hyper::Components(n)) => base.with_components(n),
        _ => return Err(mismatch()),
    };
    fit_baseline(data, &cfg, &opts.solver)
}

/// Outcome of [`cv_tune`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvOutcome {
    pub best: Hyper,
    /// Mean validation score per candidate, in grid order; infinite when a
    /// fit failed.
    pub scores: Vec<f64>,
}

/// Seeded shuffle split of `0..n` into `folds` nearly equal parts.
pub fn fold_partition(n: usize, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return Err(Error::domain(format!("folds must be >= 2, got {folds}")));
    }
    if n < folds {
        return Err(Error::domain(format!(
            "{n} samples leave a fold with an empty validation set ({folds} folds)"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream_rng(seed, 0, "cv-folds"));
    Ok((0..folds)
        .map(|j| order[j * n / folds..(j + 1) * n / folds].to_vec())
        .collect())
}

/// Validation score of `model`: WMSE under `sigma` for regression, mean
/// log-loss for classification.
fn validation_score(model: &FittedModel, val: &Dataset, sigma: Option<&ndarray::Array2<f64>>) -> Result<f64> {
    match val.task() {
        Task::Regression => {
            let pred = model.predict_batch(val.x().view())?;
            let sigma = sigma.expect("regression folds carry a reference covariance");
            wmse(val.y().view(), pred.view(), sigma.view())
        }
        Task::Classification => {
            if model.coefficients.dim() != (val.p(), val.k()) {
                return Err(Error::shape("model does not match the validation set"));
            }
            let losses = logloss_per_sample(model.coefficients.view(), val.x().view(), val.y().view());
            Ok(losses.mean().unwrap_or(f64::NAN))
        }
    }
}

/// K-fold cross-validation over `grid`.
///
/// Regression candidates are compared by validation WMSE with the residual
/// covariance of an OLS fit on the same training folds, so every candidate
/// is weighted identically. Classification candidates are compared by mean
/// validation log-loss. Ties go to the more regularized candidate (larger
/// `ε`/`λ`, fewer components).
pub fn cv_tune(
    data: &Dataset,
    method: MethodKind,
    grid: &[Hyper],
    folds: usize,
    seed: u64,
    opts: &FitOptions,
) -> Result<CvOutcome> {
    if grid.is_empty() {
        return Err(Error::domain("tuning grid is empty"));
    }
    let parts = fold_partition(data.n(), folds, seed)?;
    if grid.len() == 1 {
        return Ok(CvOutcome {
            best: grid[0],
            scores: vec![f64::NAN],
        });
    }
    let splits: Vec<(Dataset, Dataset, Option<ndarray::Array2<f64>>)> = parts
        .iter()
        .enumerate()
        .map(|(j, val_rows)| {
            let train_rows: Vec<usize> = parts
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != j)
                .flat_map(|(_, rows)| rows.iter().copied())
                .collect();
            let train = data.select(&train_rows);
            let val = data.select(val_rows);
            let sigma = match data.task() {
                Task::Regression => {
                    let ols = fit_ols(&train, true)?;
                    let fitted = ols.predict_batch(train.x().view())?;
                    Some(train_error_cov(train.y().view(), fitted.view(), train.p(), train.k())?)
                }
                Task::Classification => None,
            };
            Ok((train, val, sigma))
        })
        .collect::<Result<_>>()?;

    let tasks: Vec<(usize, usize)> = (0..grid.len()).flat_map(|g| (0..folds).map(move |f| (g, f))).collect();
    let results: Vec<Result<f64>> = tasks
        .par_iter()
        .map(|&(g, f)| {
            let (train, val, sigma) = &splits[f];
            let model = fit_method(train, method, grid[g], opts)?;
            validation_score(&model, val, sigma.as_ref())
        })
        .collect();

    let mut scores = vec![0.0; grid.len()];
    let mut first_error = None;
    for (&(g, _), r) in tasks.iter().zip(results) {
        match r {
            Ok(v) if v.is_finite() => scores[g] += v / folds as f64,
            Ok(_) => scores[g] = f64::INFINITY,
            Err(e) => {
                warn!("{method} with {:?} failed during cross-validation: {e}", grid[g]);
                scores[g] = f64::INFINITY;
                first_error.get_or_insert(e);
            }
        }
    }
    let mut best = 0;
    for g in 1..grid.len() {
        let (s, b) = (scores[g], scores[best]);
        let tie = s == b || (s - b).abs() <= 1e-12 * b.abs();
        if s < b && !tie || tie && grid[g].strength() > grid[best].strength() {
            best = g;
        }
    }
    if !scores[best].is_finite() {
        return Err(first_error.unwrap_or_else(|| Error::domain("no candidate produced a finite score")));
    }
    Ok(CvOutcome {
        best: grid[best],
        scores,
    })
}

/// One line of the results CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub run: usize,
    pub seed: u64,
    pub fraction: f64,
    pub method: MethodKind,
    pub wmse: Option<f64>,
    pub cvar_wmse: Option<f64>,
    pub ccr: Option<f64>,
    pub logloss: Option<f64>,
    pub cvar_logloss: Option<f64>,
    pub mpd: Option<f64>,
    pub bound: Option<f64>,
    pub epsilon: Option<f64>,
    pub lambda: Option<f64>,
    pub n_components: Option<usize>,
    pub error: Option<String>,
}

impl ResultRow {
    fn new(run: usize, seed: u64, fraction: f64, method: MethodKind) -> Self {
        ResultRow {
            run,
            seed,
            fraction,
            method,
            wmse: None,
            cvar_wmse: None,
            ccr: None,
            logloss: None,
            cvar_logloss: None,
            mpd: None,
            bound: None,
            epsilon: None,
            lambda: None,
            n_components: None,
            error: None,
        }
    }

    fn fill(&mut self, report: &MetricReport) {
        self.wmse = report.wmse;
        self.cvar_wmse = report.cvar_wmse;
        self.ccr = report.ccr;
        self.logloss = report.avg_logloss;
        self.cvar_logloss = report.cvar_logloss;
        self.mpd = report.mpd;
        self.bound = report.bound_value;
    }

    /// Metric columns by CSV name.
    pub fn metric(&self, name: &str) -> Option<f64> {
        match name {
            "wmse" => self.wmse,
            "cvar_wmse" => self.cvar_wmse,
            "ccr" => self.ccr,
            "logloss" => self.logloss,
            "cvar_logloss" => self.cvar_logloss,
            "mpd" => self.mpd,
            "bound" => self.bound,
            _ => None,
        }
    }

    fn record(&self) -> Vec<String> {
        let num = |v: Option<f64>| v.map(|v| format!("{v:?}")).unwrap_or_default();
        vec![
            self.run.to_string(),
            self.seed.to_string(),
            format!("{:?}", self.fraction),
            self.method.name().to_string(),
            num(self.wmse),
            num(self.cvar_wmse),
            num(self.ccr),
            num(self.logloss),
            num(self.cvar_logloss),
            num(self.mpd),
            num(self.bound),
            num(self.epsilon),
            num(self.lambda),
        ]
    }
}

const METRICS: [&str; 7] = ["wmse", "cvar_wmse", "ccr", "logloss", "cvar_logloss", "mpd", "bound"];

/// Mean and sample standard deviation over runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Stat> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(Stat {
            mean,
            std,
            count: values.len(),
        })
    }
}

/// Aggregate of one method at one outlier fraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryEntry {
    pub method: MethodKind,
    pub fraction: f64,
    pub runs: usize,
    pub failures: usize,
    pub metrics: std::collections::BTreeMap<String, Stat>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowError {
    pub run: usize,
    pub fraction: f64,
    pub method: MethodKind,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub config: ExperimentConfig,
    pub entries: Vec<SummaryEntry>,
    pub errors: Vec<RowError>,
}

impl Summary {
    pub fn entry(&self, method: MethodKind, fraction: f64) -> Option<&SummaryEntry> {
        self.entries.iter().find(|e| e.method == method && e.fraction == fraction)
    }

    pub fn mean(&self, method: MethodKind, fraction: f64, metric: &str) -> Option<f64> {
        self.entry(method, fraction)?.metrics.get(metric).map(|s| s.mean)
    }
}

/// All rows of an experiment in `(run, fraction, method)` order.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub rows: Vec<ResultRow>,
}

impl ExperimentReport {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        w.write_record(RESULTS_HEADER).map_err(io)?;
        for row in &self.rows {
            w.write_record(row.record()).map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("CSV output is UTF-8"))
    }

    pub fn summary(&self) -> Summary {
        let mut entries = Vec::new();
        for &fraction in &self.config.outlier_fractions {
            for &method in &self.config.methods {
                let rows: Vec<&ResultRow> = self
                    .rows
                    .iter()
                    .filter(|r| r.method == method && r.fraction == fraction)
                    .collect();
                let metrics = METRICS
                    .iter()
                    .filter_map(|&m| {
                        let vals: Vec<f64> = rows.iter().filter_map(|r| r.metric(m)).collect();
                        Stat::of(&vals).map(|s| (m.to_string(), s))
                    })
                    .collect();
                entries.push(SummaryEntry {
                    method,
                    fraction,
                    runs: rows.len(),
                    failures: rows.iter().filter(|r| r.error.is_some()).count(),
                    metrics,
                });
            }
        }
        let errors = self
            .rows
            .iter()
            .filter_map(|r| {
                r.error.as_ref().map(|m| RowError {
                    run: r.run,
                    fraction: r.fraction,
                    method: r.method,
                    message: m.clone(),
                })
            })
            .collect();
        Summary {
            config: self.config.clone(),
            entries,
            errors,
        }
    }

    pub fn summary_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.summary())?)
    }

    /// Writes `results.csv` and `summary.json` into `dir`, creating it if
    /// needed, and returns both paths.
    pub fn write_to_dir(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        fs::create_dir_all(dir)?;
        let csv_path = dir.join("results.csv");
        let json_path = dir.join("summary.json");
        self.write_csv(fs::File::create(&csv_path)?)?;
        fs::write(&json_path, self.summary_json()? + "\n")?;
        Ok((csv_path, json_path))
    }
}

/// Training set shared by a group of fractions and their test sets.
struct FitGroup {
    train: Dataset,
    tests: Vec<(usize, Dataset)>,
}

fn run_groups(cfg: &ExperimentConfig, run: usize) -> Result<Vec<FitGroup>> {
    let run64 = run as u64;
    let mut truth_rng = stream_rng(cfg.seed, run64, "truth");
    let truth = match cfg.kind.family() {
        Family::Mlr => MlrGenerator::new(cfg.p, cfg.k, &mut truth_rng)?.true_b().clone(),
        Family::Mlg => MlgGenerator::new(cfg.p, cfg.k, &mut truth_rng)?.true_b().clone(),
    };
    let sample = |n: usize, spec: &OutlierSpec, tag: &str| -> Result<Dataset> {
        let mut rng = stream_rng(cfg.seed, run64, tag);
        let d = match cfg.kind.family() {
            Family::Mlr => MlrGenerator::with_truth(truth.clone()).sample(n, spec, &mut rng),
            Family::Mlg => MlgGenerator::with_truth(truth.clone()).sample(n, spec, &mut rng),
        }?;
        Ok(if cfg.intercept { d.with_intercept_column() } else { d })
    };
    let clean = OutlierSpec::none();
    let fractions = cfg.outlier_fractions.iter().enumerate();
    Ok(match cfg.placement() {
        Placement::Test => {
            let train = sample(cfg.n_train, &clean, "train")?;
            let tests = fractions
                .map(|(i, &f)| Ok((i, sample(cfg.n_test, &cfg.kind.outliers(f)?, "test")?)))
                .collect::<Result<_>>()?;
            vec![FitGroup { train, tests }]
        }
        Placement::Train => {
            let test = sample(cfg.n_test, &clean, "test")?;
            fractions
                .map(|(i, &f)| {
                    Ok(FitGroup {
                        train: sample(cfg.n_train, &cfg.kind.outliers(f)?, "train")?,
                        tests: vec![(i, test.clone())],
                    })
                })
                .collect::<Result<_>>()?
        }
    })
}

fn fit_and_score(
    cfg: &ExperimentConfig,
    run: usize,
    cv_seed: u64,
    group: &FitGroup,
    method: MethodKind,
) -> Vec<(usize, ResultRow)> {
    let opts = cfg.fit_options();
    let fitted = cv_tune(&group.train, method, &cfg.candidates(method), cfg.folds, cv_seed, &opts).and_then(|cv| {
        let mut model = fit_method(&group.train, method, cv.best, &opts)?;
        model.seed = Some(cfg.seed);
        Ok((cv.best, model))
    });
    let eval = EvalOptions {
        alpha: cfg.alpha,
        delta: cfg.delta,
    };
    group
        .tests
        .iter()
        .map(|(fi, test)| {
            let mut row = ResultRow::new(run, cfg.seed, cfg.outlier_fractions[*fi], method);
            let outcome = fitted.as_ref().map_err(|e| e.to_string()).and_then(|(hyper, model)| {
                row.epsilon = hyper.epsilon();
                row.lambda = hyper.lambda();
                row.n_components = hyper.components();
                evaluate(model, Some(&group.train), test, &eval).map_err(|e| e.to_string())
            });
            match outcome {
                Ok(report) => row.fill(&report),
                Err(msg) => {
                    warn!("run {run}, fraction {}, {method}: {msg}", row.fraction);
                    row.error = Some(msg);
                }
            }
            (*fi, row)
        })
        .collect()
}

/// Runs every `(run, fraction, method)` cell of `cfg`.
///
/// Data generation failures abort the experiment; fitting and evaluation
/// failures are recorded on their row and the remaining cells still run.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let runs: Vec<(Vec<FitGroup>, u64)> = (0..cfg.n_runs)
        .into_par_iter()
        .map(|run| {
            let cv_seed = stream_rng(cfg.seed, run as u64, "cv").next_u64();
            Ok((run_groups(cfg, run)?, cv_seed))
        })
        .collect::<Result<_>>()?;

    let tasks: Vec<(usize, usize, usize)> = runs
        .iter()
        .enumerate()
        .flat_map(|(run, (groups, _))| {
            (0..groups.len()).flat_map(move |g| (0..cfg.methods.len()).map(move |m| (run, g, m)))
        })
        .collect();
    let mut rows: Vec<(usize, usize, usize, ResultRow)> = tasks
        .par_iter()
        .flat_map_iter(|&(run, g, m)| {
            let (groups, cv_seed) = &runs[run];
            fit_and_score(cfg, run, *cv_seed, &groups[g], cfg.methods[m])
                .into_iter()
                .map(move |(fi, row)| (run, fi, m, row))
        })
        .collect();
    rows.sort_by_key(|&(run, fi, m, _)| (run, fi, m));
    Ok(ExperimentReport {
        config: cfg.clone(),
        rows: rows.into_iter().map(|(.., row)| row).collect(),
    })
}

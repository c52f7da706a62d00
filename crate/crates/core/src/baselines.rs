//! Comparison estimators: OLS, ridge and principal-components regression,
//! and plain, ridge, LASSO and principal-components multiclass logistic
//! regression.

use log::warn;
use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Task};
use crate::error::{Error, Result};
use crate::linalg::{solve_gram, solve_spd, symmetric_eigen};
use crate::losses::mean_logloss;
use crate::model::{Family, FittedModel, MethodKind};
use crate::solver::{minimize_objective, Init, Objective, SolverConfig};

/// Ridge weight used when the Gram matrix is numerically singular.
pub const SINGULAR_FALLBACK_RIDGE: f64 = 1e-8;

/// Baseline estimator and its hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub kind: MethodKind,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default)]
    pub n_components: Option<usize>,
}

impl BaselineConfig {
    pub fn new(kind: MethodKind) -> Self {
        BaselineConfig {
            kind,
            lambda: 0.0,
            n_components: None,
        }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_components(mut self, n: usize) -> Self {
        self.n_components = Some(n);
        self
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if self.kind.dro_variant().is_some() {
            return Err(Error::domain(format!("{} is not a baseline", self.kind)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::domain(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if let Some(n) = self.n_components {
            if n == 0 || n > p {
                return Err(Error::domain(format!("n_components must be in 1..={p}, got {n}")));
            }
        }
        Ok(())
    }
}

fn require(data: &Dataset, task: Task) -> Result<()> {
    if data.task() != task {
        return Err(Error::domain(format!("expected {task:?} data, got {:?}", data.task())));
    }
    Ok(())
}

fn least_squares(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>, allow_fallback: bool) -> Result<Array2<f64>> {
    let gram = x.t().dot(&x);
    let rhs = x.t().dot(&y);
    if let Some(b) = solve_gram(gram.view(), rhs.view()) {
        return Ok(b);
    }
    if !allow_fallback {
        return Err(Error::Factorization("Gram matrix X'X is singular".into()));
    }
    warn!("singular Gram matrix; falling back to ridge with lambda = {SINGULAR_FALLBACK_RIDGE}");
    ridge_solve(x, y, SINGULAR_FALLBACK_RIDGE)
}

fn ridge_solve(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>, lambda: f64) -> Result<Array2<f64>> {
    let mut gram = x.t().dot(&x);
    gram.diag_mut().mapv_inplace(|v| v + lambda);
    let rhs = x.t().dot(&y);
    if lambda > 0.0 {
        solve_spd(gram.view(), rhs.view())
    } else {
        solve_gram(gram.view(), rhs.view()).ok_or_else(|| Error::Factorization("Gram matrix X'X is singular".into()))
    }
}

/// `B = (X'X)^{-1} X'Y`. A singular Gram matrix is an error unless
/// `allow_fallback`, in which case a tiny ridge term is added.
pub fn fit_ols(data: &Dataset, allow_fallback: bool) -> Result<FittedModel> {
    require(data, Task::Regression)?;
    let b = least_squares(data.x().view(), data.y().view(), allow_fallback)?;
    Ok(FittedModel::closed_form(MethodKind::Ols, b))
}

/// `B = (X'X + λI)^{-1} X'Y`.
pub fn fit_ridge_mlr(data: &Dataset, lambda: f64) -> Result<FittedModel> {
    require(data, Task::Regression)?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::domain(format!("lambda must be >= 0, got {lambda}")));
    }
    let b = if lambda == 0.0 {
        least_squares(data.x().view(), data.y().view(), true)?
    } else {
        ridge_solve(data.x().view(), data.y().view(), lambda)?
    };
    let mut m = FittedModel::closed_form(MethodKind::RidgeMlr, b);
    m.lambda = Some(lambda);
    Ok(m)
}

/// Leading `n` eigenvectors (as columns) of the sample covariance of `x`.
pub fn principal_directions(x: ArrayView2<'_, f64>, n: usize) -> Result<Array2<f64>> {
    let p = x.ncols();
    if n == 0 || n > p {
        return Err(Error::domain(format!("n_components must be in 1..={p}, got {n}")));
    }
    let mean = x.mean_axis(Axis(0)).expect("at least one row");
    let centered = &x - &mean;
    let denom = (x.nrows().max(2) - 1) as f64;
    let cov = centered.t().dot(&centered) / denom;
    let (_, vectors) = symmetric_eigen(cov.view());
    Ok(vectors.slice(ndarray::s![.., ..n]).to_owned())
}

/// Least squares on the scores `X V` of the leading `n` principal
/// directions, mapped back to `B = V Γ`.
pub fn fit_pcr(data: &Dataset, n_components: usize) -> Result<FittedModel> {
    require(data, Task::Regression)?;
    let v = principal_directions(data.x().view(), n_components)?;
    let scores = data.x().dot(&v);
    let gamma = least_squares(scores.view(), data.y().view(), true)?;
    let mut m = FittedModel::closed_form(MethodKind::Pcr, v.dot(&gamma));
    m.n_components = Some(n_components);
    Ok(m)
}

#[derive(Debug, Clone, Copy)]
enum Penalty {
    None,
    /// `λ trace(B'B)`
    Ridge(f64),
    /// `λ Σ |B_ij|`
    Lasso(f64),
}

struct PenalizedLogistic<'a> {
    x: ArrayView2<'a, f64>,
    y: ArrayView2<'a, f64>,
    penalty: Penalty,
}

impl PenalizedLogistic<'_> {
    fn penalty_value(&self, b: &Array2<f64>) -> f64 {
        match self.penalty {
            Penalty::None => 0.0,
            Penalty::Ridge(l) => l * b.iter().map(|v| v * v).sum::<f64>(),
            Penalty::Lasso(l) => l * b.iter().map(|v| v.abs()).sum::<f64>(),
        }
    }

    fn penalty_gradient(&self, b: &Array2<f64>) -> Option<Array2<f64>> {
        match self.penalty {
            Penalty::None => None,
            Penalty::Ridge(l) => Some(b * (2.0 * l)),
            Penalty::Lasso(l) => Some(b.mapv(|v| if v == 0.0 { 0.0 } else { l * v.signum() })),
        }
    }
}

impl Objective for PenalizedLogistic<'_> {
    fn shape(&self) -> (usize, usize) {
        (self.x.ncols(), self.y.ncols())
    }

    fn value(&self, b: &Array2<f64>) -> f64 {
        mean_logloss(b.view(), self.x, self.y).0 + self.penalty_value(b)
    }

    fn subgradient(&self, b: &Array2<f64>) -> Array2<f64> {
        self.evaluate(b).1
    }

    fn evaluate(&self, b: &Array2<f64>) -> (f64, Array2<f64>) {
        let (v, mut g) = mean_logloss(b.view(), self.x, self.y);
        if let Some(pg) = self.penalty_gradient(b) {
            g += &pg;
        }
        (v + self.penalty_value(b), g)
    }
}

/// Objective minimized by a logistic baseline at `b`; PCC models are scored
/// as vanilla fits since their coefficients live in covariate space.
pub fn mlg_baseline_objective(b: ArrayView2<'_, f64>, data: &Dataset, cfg: &BaselineConfig) -> Result<f64> {
    require(data, Task::Classification)?;
    let penalty = penalty_for(cfg)?;
    let obj = PenalizedLogistic {
        x: data.x().view(),
        y: data.y().view(),
        penalty,
    };
    Ok(obj.value(&b.to_owned()))
}

fn penalty_for(cfg: &BaselineConfig) -> Result<Penalty> {
    Ok(match cfg.kind {
        MethodKind::MlgVanilla | MethodKind::MlgPcc => Penalty::None,
        MethodKind::MlgRidge => Penalty::Ridge(cfg.lambda),
        MethodKind::MlgLasso => Penalty::Lasso(cfg.lambda),
        other => return Err(Error::domain(format!("{other} is not a logistic baseline"))),
    })
}

/// Fits one of the logistic baselines by subgradient descent.
pub fn fit_mlg_baseline(data: &Dataset, cfg: &BaselineConfig, solver: &SolverConfig) -> Result<FittedModel> {
    require(data, Task::Classification)?;
    cfg.validate(data.p())?;
    let penalty = penalty_for(cfg)?;
    let data = data.canonical();
    let (coefficients, min) = if cfg.kind == MethodKind::MlgPcc {
        let n = cfg.n_components.unwrap_or(data.p());
        let v = principal_directions(data.x().view(), n)?;
        let scores = data.x().dot(&v);
        let obj = PenalizedLogistic {
            x: scores.view(),
            y: data.y().view(),
            penalty,
        };
        let mut local = solver.clone();
        if let Init::Given(b0) = &solver.init {
            local.init = Init::Given(v.t().dot(b0));
        }
        let min = minimize_objective(&obj, &local)?;
        (v.dot(&min.argmin), min)
    } else {
        let obj = PenalizedLogistic {
            x: data.x().view(),
            y: data.y().view(),
            penalty,
        };
        let min = minimize_objective(&obj, solver)?;
        (min.argmin.clone(), min)
    };
    Ok(FittedModel {
        kind: cfg.kind,
        coefficients,
        dro: None,
        lambda: matches!(cfg.kind, MethodKind::MlgRidge | MethodKind::MlgLasso).then_some(cfg.lambda),
        n_components: (cfg.kind == MethodKind::MlgPcc).then(|| cfg.n_components.unwrap_or(data.p())),
        solver: Some(solver.clone()),
        seed: None,
        objective_trace: min.trace,
        iterations: min.iterations,
        converged: min.converged,
    })
}

/// Dispatches to the fitting routine of `cfg.kind`.
pub fn fit_baseline(data: &Dataset, cfg: &BaselineConfig, solver: &SolverConfig) -> Result<FittedModel> {
    cfg.validate(data.p())?;
    match cfg.kind.family() {
        Family::Mlr => match cfg.kind {
            MethodKind::Ols => fit_ols(data, true),
            MethodKind::RidgeMlr => fit_ridge_mlr(data, cfg.lambda),
            MethodKind::Pcr => fit_pcr(data, cfg.n_components.unwrap_or(data.p())),
            _ => unreachable!("validated as a baseline"),
        },
        Family::Mlg => fit_mlg_baseline(data, cfg, solver),
    }
}

//! Evaluation metrics.
//!
//! * WMSE: `(1/M) Σ (y_i − ŷ_i)' Σ̂^{-1} (y_i − ŷ_i)` with `Σ̂` the training
//!   residual covariance.
//! * CVaR at level `α`: mean of the `⌈(1−α)M⌉` largest losses.
//! * CCR: fraction of correctly predicted labels.
//! * MPD: the smallest `ℓ1` perturbation that flips a predicted label.
//! * The out-of-sample log-loss bound for the robust classifiers.

use log::warn;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Task};
use crate::dro::{Variant, DroConfig};
use crate::error::{Error, Result};
use crate::linalg::solve_spd;
use crate::losses::logloss_per_sample;
use crate::model::{argmax, Family, FittedModel};
use crate::norms::{lrs_norm, vector_norm, NormOrder};

/// Diagonal floor added to the residual covariance before inversion.
pub const COVARIANCE_FLOOR: f64 = 1e-8;
/// Default CVaR confidence level.
pub const DEFAULT_ALPHA: f64 = 0.8;
/// Default failure probability of the generalization bound.
pub const DEFAULT_DELTA: f64 = 0.1;

fn same_shape(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::shape(format!(
            "{}x{} vs {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    Ok(())
}

/// Per-sample quadratic forms `r_i' Σ̂^{-1} r_i`.
pub fn weighted_squared_errors(
    y_true: ArrayView2<'_, f64>,
    y_pred: ArrayView2<'_, f64>,
    sigma_hat: ArrayView2<'_, f64>,
) -> Result<Array1<f64>> {
    same_shape(y_true, y_pred)?;
    let k = y_true.ncols();
    if sigma_hat.dim() != (k, k) {
        return Err(Error::shape(format!("covariance must be {k}x{k}")));
    }
    let resid = &y_true - &y_pred;
    let inv = solve_spd(sigma_hat, Array2::eye(k).view())?;
    let weighted = resid.dot(&inv);
    Ok((&weighted * &resid).sum_axis(Axis(1)))
}

/// Weighted mean squared error.
pub fn wmse(y_true: ArrayView2<'_, f64>, y_pred: ArrayView2<'_, f64>, sigma_hat: ArrayView2<'_, f64>) -> Result<f64> {
    let q = weighted_squared_errors(y_true, y_pred, sigma_hat)?;
    q.mean().ok_or_else(|| Error::domain("no samples"))
}

/// `Σ̂ = (Y − Ŷ)'(Y − Ŷ) / (N − pK)`, symmetrized, plus `1e-8·I`.
///
/// When `N ≤ pK` the divisor is `max(1, N − pK)` and a warning is logged.
pub fn train_error_cov(y: ArrayView2<'_, f64>, y_hat: ArrayView2<'_, f64>, p: usize, k: usize) -> Result<Array2<f64>> {
    same_shape(y, y_hat)?;
    let n = y.nrows();
    let dof = n as i64 - (p * k) as i64;
    if dof <= 0 {
        warn!("N = {n} <= pK = {}; residual covariance divisor clamped to 1", p * k);
    }
    let resid = &y - &y_hat;
    let mut cov = resid.t().dot(&resid) / dof.max(1) as f64;
    cov = (&cov + &cov.t()) * 0.5;
    cov.diag_mut().mapv_inplace(|v| v + COVARIANCE_FLOOR);
    Ok(cov)
}

/// Mean of the `⌈(1−α)M⌉` largest losses.
pub fn cvar(losses: &[f64], alpha: f64) -> Result<f64> {
    if losses.is_empty() {
        return Err(Error::domain("CVaR of an empty loss list"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(format!("CVaR level must be in (0, 1), got {alpha}")));
    }
    let m = losses.len();
    // slack keeps e.g. (1 - 0.7) * 10 = 3.0000000000000004 from rounding up to 4
    let tail = (((1.0 - alpha) * m as f64) - 1e-9).ceil().clamp(1.0, m as f64) as usize;
    let mut sorted = losses.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    Ok(sorted[..tail].iter().sum::<f64>() / tail as f64)
}

/// Fraction of positions where the labels agree.
pub fn ccr(labels_true: &[usize], labels_pred: &[usize]) -> Result<f64> {
    if labels_true.len() != labels_pred.len() {
        return Err(Error::shape(format!(
            "{} true labels vs {} predictions",
            labels_true.len(),
            labels_pred.len()
        )));
    }
    if labels_true.is_empty() {
        return Err(Error::domain("CCR of an empty label list"));
    }
    let hits = labels_true.iter().zip(labels_pred).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / labels_true.len() as f64)
}

/// `min ‖x − x̃‖₁` subject to `(w_j − w_k)'x̃ ≥ 0`, i.e. the `ℓ1` distance
/// from `x` to the half-space where class `j` scores at least as high as
/// class `k`: `max(0, (w_k − w_j)'x) / ‖w_j − w_k‖_∞`, and 0 when
/// `w_j = w_k`.
pub fn flip_distance(b: ArrayView2<'_, f64>, x: ArrayView1<'_, f64>, k: usize, j: usize) -> f64 {
    let diff = &b.column(k) - &b.column(j);
    let scale = vector_norm(diff.view(), NormOrder::Infinity);
    if scale == 0.0 {
        return 0.0;
    }
    diff.dot(&x).max(0.0) / scale
}

/// Minimal perturbation distance of the linear classifier `B` over the rows
/// of `x`: the smallest [`flip_distance`] from a point's predicted class to
/// any other class.
pub fn mpd_coefficients(b: ArrayView2<'_, f64>, x: ArrayView2<'_, f64>) -> Result<f64> {
    let k = b.ncols();
    if k < 2 {
        return Err(Error::domain("MPD needs at least two classes"));
    }
    if x.ncols() != b.nrows() {
        return Err(Error::shape(format!("B has {} rows, x has {} columns", b.nrows(), x.ncols())));
    }
    if x.nrows() == 0 {
        return Err(Error::domain("MPD over an empty test set"));
    }
    let scores = x.dot(&b);
    let mut best = f64::INFINITY;
    for (row, s) in x.axis_iter(Axis(0)).zip(scores.axis_iter(Axis(0))) {
        let label = argmax(s);
        for j in (0..k).filter(|&j| j != label) {
            best = best.min(flip_distance(b, row, label, j));
        }
    }
    Ok(best)
}

/// [`mpd_coefficients`] for a fitted classifier.
pub fn mpd(model: &FittedModel, x: ArrayView2<'_, f64>) -> Result<f64> {
    if model.family() != Family::Mlg {
        return Err(Error::domain("MPD is defined for classifiers"));
    }
    mpd_coefficients(model.coefficients.view(), x)
}

/// Ingredients of the out-of-sample log-loss bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub train_avg_loss: f64,
    /// Almost-sure bound on `‖x‖_r`.
    pub r_x: f64,
    /// Bound on the regularizer norm of the solution.
    pub c_bar: f64,
    pub k: usize,
    pub n: usize,
    pub delta: f64,
}

/// `train + 2(R_x C̄ + log K)/√N + (R_x C̄ + log K) √(8 log(2/δ)/N)`.
pub fn generalization_bound(inputs: &BoundInputs) -> Result<f64> {
    if !(inputs.delta > 0.0 && inputs.delta < 1.0) {
        return Err(Error::domain(format!("delta must be in (0, 1), got {}", inputs.delta)));
    }
    if inputs.n == 0 || inputs.k == 0 {
        return Err(Error::domain("N and K must be >= 1"));
    }
    if !(inputs.r_x > 0.0 && inputs.c_bar >= 0.0) {
        return Err(Error::domain("R_x must be positive and C_bar nonnegative"));
    }
    let n = inputs.n as f64;
    let a = inputs.r_x * inputs.c_bar + (inputs.k as f64).ln();
    Ok(inputs.train_avg_loss + 2.0 * a / n.sqrt() + a * (8.0 * (2.0 / inputs.delta).ln() / n).sqrt())
}

/// `K^{1/s} ‖B‖_{s,r} + ‖B‖_{s,1}` (SR) or `K^{1/s} ‖B'‖_{1,s} + ‖B‖_{s,1}` (1S).
pub fn coefficient_bound(b: ArrayView2<'_, f64>, variant: Variant, r: NormOrder) -> Result<f64> {
    let s = r.dual();
    let factor = (b.ncols() as f64).powf(s.reciprocal());
    let feature = match variant {
        Variant::Sr => lrs_norm(b, s, r)?,
        Variant::OneS => lrs_norm(b.t(), NormOrder::ONE, s)?,
    };
    Ok(factor * feature + lrs_norm(b, s, NormOrder::ONE)?)
}

/// Largest `‖x_i‖_r` over the rows of `x`.
pub fn covariate_radius(x: ArrayView2<'_, f64>, r: NormOrder) -> f64 {
    x.axis_iter(Axis(0)).map(|row| vector_norm(row, r)).fold(0.0, f64::max)
}

/// Bound for a robust classifier, with `R_x` estimated on the training set.
pub fn model_bound(b: ArrayView2<'_, f64>, cfg: &DroConfig, train: &Dataset, delta: f64) -> Result<f64> {
    let losses = logloss_per_sample(b, train.x().view(), train.y().view());
    generalization_bound(&BoundInputs {
        train_avg_loss: losses.mean().unwrap_or(0.0),
        r_x: covariate_radius(train.x().view(), cfg.r),
        c_bar: coefficient_bound(b, cfg.variant, cfg.r)?,
        k: b.ncols(),
        n: train.n(),
        delta,
    })
}

/// Test-set metrics of one fitted model. Fields that do not apply to the
/// model's family are `None`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricReport {
    pub wmse: Option<f64>,
    pub cvar_wmse: Option<f64>,
    pub ccr: Option<f64>,
    pub avg_logloss: Option<f64>,
    pub cvar_logloss: Option<f64>,
    pub mpd: Option<f64>,
    pub bound_value: Option<f64>,
    pub per_sample_loss: Vec<f64>,
}

/// Options for [`evaluate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub alpha: f64,
    pub delta: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            alpha: DEFAULT_ALPHA,
            delta: DEFAULT_DELTA,
        }
    }
}

/// Metrics of `model` on `test`. Regression needs the training set for
/// `Σ̂`; classification uses it for the bound of robust models.
pub fn evaluate(model: &FittedModel, train: Option<&Dataset>, test: &Dataset, opts: &EvalOptions) -> Result<MetricReport> {
    match model.family() {
        Family::Mlr => {
            let train = train.ok_or_else(|| Error::domain("regression metrics need the training set"))?;
            evaluate_regression(model, train, test, opts.alpha)
        }
        Family::Mlg => evaluate_classification(model, train, test, opts),
    }
}

fn require(data: &Dataset, task: Task, what: &str) -> Result<()> {
    if data.task() != task {
        return Err(Error::domain(format!("{what} set must hold {task:?} data")));
    }
    Ok(())
}

pub fn evaluate_regression(model: &FittedModel, train: &Dataset, test: &Dataset, alpha: f64) -> Result<MetricReport> {
    require(train, Task::Regression, "training")?;
    require(test, Task::Regression, "test")?;
    let fitted = model.predict_batch(train.x().view())?;
    let sigma = train_error_cov(train.y().view(), fitted.view(), train.p(), train.k())?;
    let pred = model.predict_batch(test.x().view())?;
    let q = weighted_squared_errors(test.y().view(), pred.view(), sigma.view())?;
    let per = q.to_vec();
    Ok(MetricReport {
        wmse: q.mean(),
        cvar_wmse: Some(cvar(&per, alpha)?),
        per_sample_loss: per,
        ..MetricReport::default()
    })
}

pub fn evaluate_classification(
    model: &FittedModel,
    train: Option<&Dataset>,
    test: &Dataset,
    opts: &EvalOptions,
) -> Result<MetricReport> {
    require(test, Task::Classification, "test")?;
    let b = model.coefficients.view();
    let losses = logloss_per_sample(b, test.x().view(), test.y().view());
    let per = losses.to_vec();
    let pred = model.predict_labels(test.x().view())?;
    let bound_value = match (model.dro, train) {
        (Some(cfg), Some(train)) => {
            require(train, Task::Classification, "training")?;
            Some(model_bound(b, &cfg, train, opts.delta)?)
        }
        _ => None,
    };
    Ok(MetricReport {
        ccr: Some(ccr(&test.labels(), &pred)?),
        avg_logloss: losses.mean(),
        cvar_logloss: Some(cvar(&per, opts.alpha)?),
        mpd: Some(mpd_coefficients(b, test.x().view())?),
        bound_value,
        per_sample_loss: per,
        ..MetricReport::default()
    })
}

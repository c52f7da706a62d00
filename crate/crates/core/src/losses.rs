//! Pointwise losses `h_B(x, y)` and their gradients with respect to `B`.
//!
//! Regression uses a Lipschitz function of the residual, `l(y - B'x)`, with
//! `l = ‖·‖₂` (Lipschitz constant 1) as the default. Classification uses the
//! multiclass log-loss `log 1'exp(B'x) - y'B'x`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

/// A loss value together with its (sub)gradient with respect to `B`.
#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub gradient: Array2<f64>,
}

/// A Lipschitz-continuous function of the residual vector.
pub trait ResidualLoss: Sync {
    fn value(&self, residual: ArrayView1<'_, f64>) -> f64;
    /// A subgradient at `residual`.
    fn gradient(&self, residual: ArrayView1<'_, f64>) -> Array1<f64>;
    /// Lipschitz constant with respect to the norm inducing the transport cost.
    fn lipschitz(&self) -> f64;
}

/// `l(z) = ‖z‖₂`, 1-Lipschitz on `‖·‖₂`. The subgradient at `z = 0` is 0.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct L2Residual;

impl ResidualLoss for L2Residual {
    fn value(&self, residual: ArrayView1<'_, f64>) -> f64 {
        residual.dot(&residual).sqrt()
    }

    fn gradient(&self, residual: ArrayView1<'_, f64>) -> Array1<f64> {
        let n = self.value(residual);
        if n == 0.0 {
            Array1::zeros(residual.len())
        } else {
            residual.mapv(|v| v / n)
        }
    }

    fn lipschitz(&self) -> f64 {
        1.0
    }
}

fn check_sample(b: ArrayView2<'_, f64>, x: ArrayView1<'_, f64>, y: ArrayView1<'_, f64>) -> Result<()> {
    if b.nrows() != x.len() || b.ncols() != y.len() {
        return Err(Error::shape(format!(
            "B is {}x{}, x has {} entries, y has {}",
            b.nrows(),
            b.ncols(),
            x.len(),
            y.len()
        )));
    }
    Ok(())
}

/// `l(y - B'x)` and its gradient `-x ∇l(y - B'x)'`.
pub fn residual_loss<L: ResidualLoss + ?Sized>(
    loss: &L,
    b: ArrayView2<'_, f64>,
    x: ArrayView1<'_, f64>,
    y: ArrayView1<'_, f64>,
) -> Result<LossValue> {
    check_sample(b, x, y)?;
    let residual = &y - &b.t().dot(&x);
    let g = loss.gradient(residual.view());
    let gradient = outer(x, g.view()) * -1.0;
    Ok(LossValue {
        value: loss.value(residual.view()),
        gradient,
    })
}

/// `‖y - B'x‖₂` with gradient `-x res'/‖res‖₂` (zero when the residual is zero).
pub fn mlr_loss(b: ArrayView2<'_, f64>, x: ArrayView1<'_, f64>, y: ArrayView1<'_, f64>) -> Result<LossValue> {
    residual_loss(&L2Residual, b, x, y)
}

fn outer(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> Array2<f64> {
    Array2::from_shape_fn((a.len(), b.len()), |(i, j)| a[i] * b[j])
}

/// `log Σ exp(s_k)` with the maximum shifted out.
pub fn log_sum_exp(scores: ArrayView1<'_, f64>) -> f64 {
    let m = scores.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    if !m.is_finite() {
        return m;
    }
    m + scores.iter().map(|&v| (v - m).exp()).sum::<f64>().ln()
}

/// Softmax of a score vector, computed after subtracting the maximum.
pub fn softmax(mut scores: Array1<f64>) -> Array1<f64> {
    let m = scores.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    scores.mapv_inplace(|v| (v - m).exp());
    let total = scores.sum();
    scores /= total;
    scores
}

/// Class probabilities `p_i = exp(w_i'x) / Σ_k exp(w_k'x)`.
pub fn softmax_probs(b: ArrayView2<'_, f64>, x: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
    if b.nrows() != x.len() {
        return Err(Error::shape(format!("B has {} rows, x has {} entries", b.nrows(), x.len())));
    }
    Ok(softmax(b.t().dot(&x)))
}

fn one_hot_label(y: ArrayView1<'_, f64>) -> Result<usize> {
    let ones = y.iter().filter(|&&v| v == 1.0).count();
    if ones != 1 || y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::domain("label vector is not one-hot"));
    }
    Ok(y.iter().position(|&v| v == 1.0).expect("exactly one entry is 1"))
}

/// Multiclass log-loss `log 1'exp(B'x) - y'B'x` with gradient `x (p - y)'`.
pub fn mlg_logloss(b: ArrayView2<'_, f64>, x: ArrayView1<'_, f64>, y: ArrayView1<'_, f64>) -> Result<LossValue> {
    check_sample(b, x, y)?;
    let label = one_hot_label(y)?;
    let scores = b.t().dot(&x);
    let value = log_sum_exp(scores.view()) - scores[label];
    let probs = softmax(scores);
    let gradient = outer(x, (&probs - &y).view());
    Ok(LossValue { value, gradient })
}

/// Mean residual loss over the rows of `(X, Y)` and its gradient.
pub fn mean_residual_loss<L: ResidualLoss + ?Sized>(
    loss: &L,
    b: ArrayView2<'_, f64>,
    x: ArrayView2<'_, f64>,
    y: ArrayView2<'_, f64>,
) -> (f64, Array2<f64>) {
    let n = x.nrows() as f64;
    let residuals = &y - &x.dot(&b);
    let mut total = 0.0;
    let mut slopes = Array2::zeros(residuals.raw_dim());
    for (r, mut s) in residuals.axis_iter(Axis(0)).zip(slopes.axis_iter_mut(Axis(0))) {
        total += loss.value(r);
        s.assign(&loss.gradient(r));
    }
    (total / n, x.t().dot(&slopes) * (-1.0 / n))
}

/// Per-row residual losses.
pub fn residual_losses<L: ResidualLoss + ?Sized>(
    loss: &L,
    b: ArrayView2<'_, f64>,
    x: ArrayView2<'_, f64>,
    y: ArrayView2<'_, f64>,
) -> Array1<f64> {
    let residuals = &y - &x.dot(&b);
    residuals.axis_iter(Axis(0)).map(|r| loss.value(r)).collect()
}

/// Per-row log-losses for one-hot `Y`.
pub fn logloss_per_sample(b: ArrayView2<'_, f64>, x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Array1<f64> {
    let scores = x.dot(&b);
    scores
        .axis_iter(Axis(0))
        .zip(y.axis_iter(Axis(0)))
        .map(|(s, yr)| log_sum_exp(s) - s.dot(&yr))
        .collect()
}

/// Mean log-loss over the rows of `(X, Y)` and its gradient `X'(P - Y)/N`.
pub fn mean_logloss(b: ArrayView2<'_, f64>, x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> (f64, Array2<f64>) {
    let n = x.nrows() as f64;
    let mut scores = x.dot(&b);
    let mut total = 0.0;
    for (mut s, yr) in scores.axis_iter_mut(Axis(0)).zip(y.axis_iter(Axis(0))) {
        total += log_sum_exp(s.view()) - s.dot(&yr);
        let p = softmax(s.to_owned());
        s.assign(&(&p - &yr));
    }
    (total / n, x.t().dot(&scores) / n)
}

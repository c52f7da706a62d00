//! Wasserstein-robust regularized objectives.
//!
//! With the transport cost induced by `‖·‖_r` and `s` its dual exponent,
//! the robust problems relax to empirical risk plus a matrix-norm penalty:
//!
//! | method | penalty |
//! |--------|---------|
//! | MLR-SR | `εL ‖B̃'‖_{s,r}` |
//! | MLR-1S | `εL ‖B̃‖_{1,s}` |
//! | MLG-SR | `ε (K^{1/s} ‖B‖_{s,r} + ‖B‖_{s,1})` |
//! | MLG-1S | `ε (K^{1/s} ‖B'‖_{1,s} + ‖B‖_{s,1})` |
//!
//! where `B̃ = [-B', I_K]` is the `K×(p+K)` augmented matrix.

use ndarray::{s, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Task};
use crate::error::{Error, Result};
use crate::losses::{mean_logloss, mean_residual_loss, L2Residual, ResidualLoss};
use crate::model::{Family, FittedModel, MethodKind};
use crate::norms::{lrs_norm, lrs_subgradient, NormOrder};
use crate::solver::{minimize_objective, Objective, SolverConfig};

/// Which of the two relaxations to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "sr")]
    Sr,
    #[serde(rename = "1s")]
    OneS,
}

/// Model family, relaxation, norm order `r`, radius `ε` and the Lipschitz
/// constant `L` of the regression loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DroConfig {
    pub family: Family,
    pub variant: Variant,
    pub r: NormOrder,
    pub epsilon: f64,
    pub lipschitz: f64,
}

impl DroConfig {
    /// Regression with `l = ‖·‖₂`, `L = 1` and `r = 2`.
    pub fn mlr(variant: Variant, epsilon: f64) -> Result<Self> {
        let cfg = DroConfig {
            family: Family::Mlr,
            variant,
            r: NormOrder::TWO,
            epsilon,
            lipschitz: 1.0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Classification with `r = 2`.
    pub fn mlg(variant: Variant, epsilon: f64) -> Result<Self> {
        let cfg = DroConfig {
            family: Family::Mlg,
            variant,
            r: NormOrder::TWO,
            epsilon,
            lipschitz: 1.0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_r(mut self, r: NormOrder) -> Self {
        self.r = r;
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    /// Dual exponent of `r`.
    pub fn s(&self) -> NormOrder {
        self.r.dual()
    }

    pub fn kind(&self) -> MethodKind {
        MethodKind::dro(self.family, self.variant)
    }

    pub fn validate(&self) -> Result<()> {
        NormOrder::new(self.r.as_f64())?;
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::domain(format!("Wasserstein radius must be positive, got {}", self.epsilon)));
        }
        if !(self.lipschitz > 0.0 && self.lipschitz.is_finite()) {
            return Err(Error::domain(format!("Lipschitz constant must be positive, got {}", self.lipschitz)));
        }
        Ok(())
    }
}

/// `B̃ = [-B', I_K]`, whose `i`-th row is `(-B_1i, …, -B_pi, e_i)`.
pub fn augmented_matrix(b: ArrayView2<'_, f64>) -> Array2<f64> {
    let (p, k) = b.dim();
    let mut aug = Array2::zeros((k, p + k));
    aug.slice_mut(s![.., ..p]).assign(&b.t().mapv(|v| -v));
    aug.slice_mut(s![.., p..]).assign(&Array2::eye(k));
    aug
}

/// `εL ‖B̃'‖_{s,r}` (SR) or `εL ‖B̃‖_{1,s}` (1S).
pub fn mlr_regularizer(b: ArrayView2<'_, f64>, cfg: &DroConfig) -> Result<f64> {
    let aug = augmented_matrix(b);
    let s = cfg.s();
    let norm = match cfg.variant {
        Variant::Sr => lrs_norm(aug.t(), s, cfg.r)?,
        Variant::OneS => lrs_norm(aug.view(), NormOrder::ONE, s)?,
    };
    Ok(cfg.epsilon * cfg.lipschitz * norm)
}

fn class_factor(k: usize, s: NormOrder) -> f64 {
    (k as f64).powf(s.reciprocal())
}

/// `ε (K^{1/s} ‖B‖_{s,r} + ‖B‖_{s,1})` (SR) or
/// `ε (K^{1/s} ‖B'‖_{1,s} + ‖B‖_{s,1})` (1S).
pub fn mlg_regularizer(b: ArrayView2<'_, f64>, cfg: &DroConfig) -> Result<f64> {
    let s = cfg.s();
    let feature = match cfg.variant {
        Variant::Sr => lrs_norm(b, s, cfg.r)?,
        Variant::OneS => lrs_norm(b.t(), NormOrder::ONE, s)?,
    };
    let label = lrs_norm(b, s, NormOrder::ONE)?;
    Ok(cfg.epsilon * (class_factor(b.ncols(), s) * feature + label))
}

/// Penalty of the configured family.
pub fn regularizer(b: ArrayView2<'_, f64>, cfg: &DroConfig) -> Result<f64> {
    match cfg.family {
        Family::Mlr => mlr_regularizer(b, cfg),
        Family::Mlg => mlg_regularizer(b, cfg),
    }
}

/// A subgradient of [`regularizer`] with respect to `B`.
///
/// For regression the norm subgradient lives in `B̃` coordinates; only the
/// `-B'` block depends on `B`, so it is read back with a sign flip and the
/// identity block is dropped.
pub fn regularizer_subgradient(b: ArrayView2<'_, f64>, cfg: &DroConfig) -> Result<Array2<f64>> {
    let (p, k) = b.dim();
    let s = cfg.s();
    match cfg.family {
        Family::Mlr => {
            let aug = augmented_matrix(b);
            let scale = -cfg.epsilon * cfg.lipschitz;
            Ok(match cfg.variant {
                // (p+K)×K, top block pairs with -B
                Variant::Sr => lrs_subgradient(aug.t(), s, cfg.r)?.slice(s![..p, ..]).to_owned() * scale,
                // K×(p+K), left block pairs with -B'
                Variant::OneS => {
                    lrs_subgradient(aug.view(), NormOrder::ONE, s)?
                        .slice(s![.., ..p])
                        .t()
                        .to_owned()
                        * scale
                }
            })
        }
        Family::Mlg => {
            let feature = match cfg.variant {
                Variant::Sr => lrs_subgradient(b, s, cfg.r)?,
                Variant::OneS => lrs_subgradient(b.t(), NormOrder::ONE, s)?.t().to_owned(),
            };
            let label = lrs_subgradient(b, s, NormOrder::ONE)?;
            Ok((feature * class_factor(k, s) + label) * cfg.epsilon)
        }
    }
}

/// Regularized empirical risk over a dataset.
pub struct DroProblem<'a> {
    data: &'a Dataset,
    cfg: DroConfig,
    loss: &'a dyn ResidualLoss,
}

impl<'a> DroProblem<'a> {
    /// Problem with the default regression loss `‖·‖₂`.
    pub fn new(data: &'a Dataset, cfg: DroConfig) -> Result<Self> {
        DroProblem::with_loss(data, cfg, &L2Residual)
    }

    /// Regression problem with a caller-supplied Lipschitz loss; `cfg.lipschitz`
    /// should be its constant.
    pub fn with_loss(data: &'a Dataset, cfg: DroConfig, loss: &'a dyn ResidualLoss) -> Result<Self> {
        let expected = match cfg.family {
            Family::Mlr => Task::Regression,
            Family::Mlg => Task::Classification,
        };
        if data.task() != expected {
            return Err(Error::domain(format!(
                "{:?} objective needs {:?} data, got {:?}",
                cfg.family,
                expected,
                data.task()
            )));
        }
        Ok(DroProblem { data, cfg, loss })
    }

    fn check(&self, b: ArrayView2<'_, f64>) -> Result<()> {
        if b.dim() != self.shape() {
            return Err(Error::shape(format!(
                "B is {}x{}, data needs {}x{}",
                b.nrows(),
                b.ncols(),
                self.data.p(),
                self.data.k()
            )));
        }
        Ok(())
    }

    fn empirical(&self, b: ArrayView2<'_, f64>) -> (f64, Array2<f64>) {
        let (x, y) = (self.data.x().view(), self.data.y().view());
        match self.cfg.family {
            Family::Mlr => mean_residual_loss(self.loss, b, x, y),
            Family::Mlg => mean_logloss(b, x, y),
        }
    }

    pub fn objective(&self, b: ArrayView2<'_, f64>) -> Result<f64> {
        self.check(b)?;
        Ok(self.empirical(b).0 + regularizer(b, &self.cfg)?)
    }

    pub fn gradient(&self, b: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check(b)?;
        Ok(self.empirical(b).1 + regularizer_subgradient(b, &self.cfg)?)
    }
}

impl Objective for DroProblem<'_> {
    fn shape(&self) -> (usize, usize) {
        (self.data.p(), self.data.k())
    }

    fn value(&self, b: &Array2<f64>) -> f64 {
        self.objective(b.view()).unwrap_or(f64::NAN)
    }

    fn subgradient(&self, b: &Array2<f64>) -> Array2<f64> {
        self.gradient(b.view())
            .unwrap_or_else(|_| Array2::from_elem(b.raw_dim(), f64::NAN))
    }

    fn evaluate(&self, b: &Array2<f64>) -> (f64, Array2<f64>) {
        let (loss, loss_grad) = self.empirical(b.view());
        match (regularizer(b.view(), &self.cfg), regularizer_subgradient(b.view(), &self.cfg)) {
            (Ok(pen), Ok(pen_grad)) => (loss + pen, loss_grad + pen_grad),
            _ => (f64::NAN, Array2::from_elem(b.raw_dim(), f64::NAN)),
        }
    }
}

/// `(1/N) Σ h_B(x_i, y_i) + penalty(B)`.
pub fn dro_objective(b: ArrayView2<'_, f64>, data: &Dataset, cfg: &DroConfig) -> Result<f64> {
    DroProblem::new(data, *cfg)?.objective(b)
}

/// A subgradient of [`dro_objective`].
pub fn dro_subgradient(b: ArrayView2<'_, f64>, data: &Dataset, cfg: &DroConfig) -> Result<Array2<f64>> {
    DroProblem::new(data, *cfg)?.gradient(b)
}

/// Minimizes the robust objective by subgradient descent.
pub fn fit_dro(data: &Dataset, cfg: &DroConfig, solver: &SolverConfig) -> Result<FittedModel> {
    cfg.validate()?;
    fit_dro_unchecked(data, cfg, solver, &L2Residual)
}

/// [`fit_dro`] with a caller-supplied regression loss.
pub fn fit_dro_with_loss(
    data: &Dataset,
    cfg: &DroConfig,
    solver: &SolverConfig,
    loss: &dyn ResidualLoss,
) -> Result<FittedModel> {
    cfg.validate()?;
    fit_dro_unchecked(data, cfg, solver, loss)
}

// Skips the ε > 0 check so tests can fit the unregularized limit.
pub(crate) fn fit_dro_unchecked(
    data: &Dataset,
    cfg: &DroConfig,
    solver: &SolverConfig,
    loss: &dyn ResidualLoss,
) -> Result<FittedModel> {
    let canonical = data.canonical();
    let problem = DroProblem::with_loss(&canonical, *cfg, loss)?;
    let min = minimize_objective(&problem, solver)?;
    Ok(FittedModel {
        kind: cfg.kind(),
        coefficients: min.argmin,
        dro: Some(*cfg),
        lambda: None,
        n_components: None,
        solver: Some(solver.clone()),
        seed: None,
        objective_trace: min.trace,
        iterations: min.iterations,
        converged: min.converged,
    })
}

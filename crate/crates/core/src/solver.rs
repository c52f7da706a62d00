//! Full-batch subgradient descent.
//!
//! Each iteration evaluates the objective and a subgradient at the current
//! point, records the best value seen so far and steps against the
//! subgradient. The best iterate, not the last one, is returned.
//!
//! Stopping: the best value improved by less than `tol` (relative) over the
//! last `window` iterations, a zero subgradient was returned, or
//! `max_iters` was reached.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Step length schedule `α_t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepRule {
    /// `α_t = c`
    Constant,
    /// `α_t = c / √t`
    Diminishing,
}

/// Starting point of the iteration.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Init {
    #[default]
    Zeros,
    Given(Array2<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub max_iters: usize,
    pub step_rule: StepRule,
    /// The constant `c` of the step rule.
    pub step_size: f64,
    /// Relative improvement threshold of the best objective over `window`.
    pub tol: f64,
    pub window: usize,
    /// Step along `g / ‖g‖_F` instead of `g`.
    pub normalize: bool,
    #[serde(skip)]
    pub init: Init,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iters: 5000,
            step_rule: StepRule::Diminishing,
            step_size: 0.1,
            tol: 1e-6,
            window: 50,
            normalize: true,
            init: Init::Zeros,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::domain("max_iters must be >= 1"));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::domain("step_size must be positive"));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::domain("tol must be positive"));
        }
        if self.window == 0 {
            return Err(Error::domain("window must be >= 1"));
        }
        Ok(())
    }

    pub fn with_init(mut self, init: Array2<f64>) -> Self {
        self.init = Init::Given(init);
        self
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }
}

/// A function of a matrix argument with a subgradient oracle.
pub trait Objective {
    fn shape(&self) -> (usize, usize);

    fn value(&self, b: &Array2<f64>) -> f64;

    fn subgradient(&self, b: &Array2<f64>) -> Array2<f64>;

    /// Value and subgradient together; override when they share work.
    fn evaluate(&self, b: &Array2<f64>) -> (f64, Array2<f64>) {
        (self.value(b), self.subgradient(b))
    }
}

/// Result of a minimization.
#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub argmin: Array2<f64>,
    pub value: f64,
    /// Best-so-far objective after each iteration.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

struct FnObjective<F, G> {
    f: F,
    g: G,
    shape: (usize, usize),
}

impl<F, G> Objective for FnObjective<F, G>
where
    F: Fn(&Array2<f64>) -> f64,
    G: Fn(&Array2<f64>) -> Array2<f64>,
{
    fn shape(&self) -> (usize, usize) {
        self.shape
    }

    fn value(&self, b: &Array2<f64>) -> f64 {
        (self.f)(b)
    }

    fn subgradient(&self, b: &Array2<f64>) -> Array2<f64> {
        (self.g)(b)
    }
}

/// Minimizes `objective` over matrices of the given shape.
pub fn minimize<F, G>(objective: F, subgradient: G, shape: (usize, usize), cfg: &SolverConfig) -> Result<Minimum>
where
    F: Fn(&Array2<f64>) -> f64,
    G: Fn(&Array2<f64>) -> Array2<f64>,
{
    minimize_objective(
        &FnObjective {
            f: objective,
            g: subgradient,
            shape,
        },
        cfg,
    )
}

/// Minimizes an [`Objective`].
pub fn minimize_objective<O: Objective + ?Sized>(objective: &O, cfg: &SolverConfig) -> Result<Minimum> {
    cfg.validate()?;
    let shape = objective.shape();
    let mut b = match &cfg.init {
        Init::Zeros => Array2::zeros(shape),
        Init::Given(m) if m.dim() == shape => m.clone(),
        Init::Given(m) => {
            return Err(Error::shape(format!(
                "initial point is {}x{}, expected {}x{}",
                m.nrows(),
                m.ncols(),
                shape.0,
                shape.1
            )))
        }
    };
    let mut best = f64::INFINITY;
    let mut best_b = b.clone();
    let mut trace = Vec::with_capacity(cfg.max_iters.min(1 << 16));
    let mut converged = false;

    for t in 1..=cfg.max_iters {
        let (value, g) = objective.evaluate(&b);
        if !value.is_finite() || g.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged {
                iteration: t,
                value,
                trace,
            });
        }
        if value < best {
            best = value;
            best_b.assign(&b);
        }
        trace.push(best);

        if trace.len() > cfg.window {
            let earlier = trace[trace.len() - 1 - cfg.window];
            if earlier - best <= cfg.tol * best.abs().max(1e-12) {
                converged = true;
                break;
            }
        }
        let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gnorm == 0.0 {
            converged = true;
            break;
        }
        let alpha = match cfg.step_rule {
            StepRule::Constant => cfg.step_size,
            StepRule::Diminishing => cfg.step_size / (t as f64).sqrt(),
        };
        let step = if cfg.normalize { alpha / gnorm } else { alpha };
        b.scaled_add(-step, &g);
    }

    let iterations = trace.len();
    Ok(Minimum {
        argmin: best_b,
        value: best,
        trace,
        iterations,
        converged,
    })
}

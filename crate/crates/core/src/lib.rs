//! Wasserstein distributionally robust multivariate linear regression and
//! multiclass logistic regression.
//!
//! The robust problems are solved through their regularized relaxations,
//! whose penalties are `L_{r,s}` matrix norms of the coefficient matrix (see
//! [`norms`] and [`dro`]). The crate also ships the comparison baselines,
//! seeded synthetic data with outlier injection, the evaluation metrics and
//! an experiment harness that writes CSV/JSON reports.

pub mod baselines;
pub mod datagen;
pub mod dataset;
pub mod dro;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod norms;
pub mod solver;

pub use dataset::{Dataset, Task};
pub use dro::{fit_dro, DroConfig, Variant};
pub use error::{Error, Result};
pub use model::{Family, FittedModel, MethodKind};
pub use norms::NormOrder;
pub use solver::SolverConfig;

//! Fitted linear models, prediction and the JSON model document.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::dro::{DroConfig, Variant};
use crate::error::{Error, Result};
use crate::losses::softmax;
use crate::norms::NormOrder;
use crate::solver::SolverConfig;

/// Regression (`ŷ = B'x`) or classification (`softmax(B'x)`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Mlr,
    Mlg,
}

/// Every estimator the crate can fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MethodKind {
    #[serde(rename = "mlr_sr")]
    MlrSr,
    #[serde(rename = "mlr_1s")]
    Mlr1s,
    #[serde(rename = "ols")]
    Ols,
    #[serde(rename = "ridge_mlr")]
    RidgeMlr,
    #[serde(rename = "pcr")]
    Pcr,
    #[serde(rename = "mlg_sr")]
    MlgSr,
    #[serde(rename = "mlg_1s")]
    Mlg1s,
    #[serde(rename = "mlg_vanilla")]
    MlgVanilla,
    #[serde(rename = "mlg_ridge")]
    MlgRidge,
    #[serde(rename = "mlg_lasso")]
    MlgLasso,
    #[serde(rename = "mlg_pcc")]
    MlgPcc,
}

impl MethodKind {
    pub const ALL: [MethodKind; 11] = [
        MethodKind::MlrSr,
        MethodKind::Mlr1s,
        MethodKind::Ols,
        MethodKind::RidgeMlr,
        MethodKind::Pcr,
        MethodKind::MlgSr,
        MethodKind::Mlg1s,
        MethodKind::MlgVanilla,
        MethodKind::MlgRidge,
        MethodKind::MlgLasso,
        MethodKind::MlgPcc,
    ];

    pub fn family(self) -> Family {
        match self {
            MethodKind::MlrSr | MethodKind::Mlr1s | MethodKind::Ols | MethodKind::RidgeMlr | MethodKind::Pcr => {
                Family::Mlr
            }
            _ => Family::Mlg,
        }
    }

    /// The relaxation variant for the robust methods.
    pub fn dro_variant(self) -> Option<Variant> {
        match self {
            MethodKind::MlrSr | MethodKind::MlgSr => Some(Variant::Sr),
            MethodKind::Mlr1s | MethodKind::Mlg1s => Some(Variant::OneS),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MethodKind::MlrSr => "mlr_sr",
            MethodKind::Mlr1s => "mlr_1s",
            MethodKind::Ols => "ols",
            MethodKind::RidgeMlr => "ridge_mlr",
            MethodKind::Pcr => "pcr",
            MethodKind::MlgSr => "mlg_sr",
            MethodKind::Mlg1s => "mlg_1s",
            MethodKind::MlgVanilla => "mlg_vanilla",
            MethodKind::MlgRidge => "mlg_ridge",
            MethodKind::MlgLasso => "mlg_lasso",
            MethodKind::MlgPcc => "mlg_pcc",
        }
    }

    pub fn dro(family: Family, variant: Variant) -> MethodKind {
        match (family, variant) {
            (Family::Mlr, Variant::Sr) => MethodKind::MlrSr,
            (Family::Mlr, Variant::OneS) => MethodKind::Mlr1s,
            (Family::Mlg, Variant::Sr) => MethodKind::MlgSr,
            (Family::Mlg, Variant::OneS) => MethodKind::Mlg1s,
        }
    }
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MethodKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MethodKind::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::domain(format!("unknown method {s:?}")))
    }
}

/// A fitted coefficient matrix with the settings that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    pub kind: MethodKind,
    /// `p×K` coefficient matrix with class weight vectors as columns.
    pub coefficients: Array2<f64>,
    pub dro: Option<DroConfig>,
    pub lambda: Option<f64>,
    pub n_components: Option<usize>,
    pub solver: Option<SolverConfig>,
    pub seed: Option<u64>,
    /// Best-so-far objective per iteration; empty for closed-form fits.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl FittedModel {
    pub(crate) fn closed_form(kind: MethodKind, coefficients: Array2<f64>) -> Self {
        FittedModel {
            kind,
            coefficients,
            dro: None,
            lambda: None,
            n_components: None,
            solver: None,
            seed: None,
            objective_trace: Vec::new(),
            iterations: 0,
            converged: true,
        }
    }

    pub fn family(&self) -> Family {
        self.kind.family()
    }

    pub fn p(&self) -> usize {
        self.coefficients.nrows()
    }

    pub fn k(&self) -> usize {
        self.coefficients.ncols()
    }

    fn check_x(&self, len: usize) -> Result<()> {
        if len != self.p() {
            return Err(Error::shape(format!("model expects {} covariates, got {len}", self.p())));
        }
        Ok(())
    }

    /// `B'x` for regression, class probabilities for classification.
    pub fn predict(&self, x: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        self.check_x(x.len())?;
        let scores = self.coefficients.t().dot(&x);
        Ok(match self.family() {
            Family::Mlr => scores,
            Family::Mlg => softmax(scores),
        })
    }

    /// Row-wise [`FittedModel::predict`].
    pub fn predict_batch(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_x(x.ncols())?;
        let mut out = x.dot(&self.coefficients);
        if self.family() == Family::Mlg {
            for mut row in out.axis_iter_mut(Axis(0)) {
                let p = softmax(row.to_owned());
                row.assign(&p);
            }
        }
        Ok(out)
    }

    /// Highest-scoring class; ties go to the lowest index.
    pub fn predict_label(&self, x: ArrayView1<'_, f64>) -> Result<usize> {
        self.check_x(x.len())?;
        Ok(argmax(self.coefficients.t().dot(&x).view()))
    }

    pub fn predict_labels(&self, x: ArrayView2<'_, f64>) -> Result<Vec<usize>> {
        self.check_x(x.ncols())?;
        Ok(x.dot(&self.coefficients).axis_iter(Axis(0)).map(argmax).collect())
    }

    pub fn to_document(&self) -> ModelDocument {
        ModelDocument {
            kind: self.kind,
            family: self.family(),
            variant: self.dro.map(|c| c.variant),
            r: self.dro.map(|c| c.r),
            epsilon: self.dro.map(|c| c.epsilon),
            lipschitz: self.dro.map(|c| c.lipschitz),
            lambda: self.lambda,
            n_components: self.n_components,
            p: self.p(),
            k: self.k(),
            b: self.coefficients.iter().copied().collect(),
            seed: self.seed,
            solver: self.solver.clone(),
            iterations: self.iterations,
            converged: self.converged,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDocument = serde_json::from_str(text)?;
        doc.into_model()
    }
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(v: ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Serialized form of a [`FittedModel`]. `B` is stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub kind: MethodKind,
    pub family: Family,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<Variant>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<NormOrder>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lipschitz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_components: Option<usize>,
    pub p: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "B")]
    pub b: Vec<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub solver: Option<SolverConfig>,
    #[serde(default)]
    pub iterations: usize,
    #[serde(default)]
    pub converged: bool,
}

impl ModelDocument {
    pub fn into_model(self) -> Result<FittedModel> {
        if self.family != self.kind.family() {
            return Err(Error::parse(None, format!("family {:?} does not match kind {}", self.family, self.kind)));
        }
        if self.p == 0 || self.k == 0 || self.b.len() != self.p * self.k {
            return Err(Error::parse(
                None,
                format!("B has {} entries, expected p*K = {}", self.b.len(), self.p * self.k),
            ));
        }
        let coefficients = Array2::from_shape_vec((self.p, self.k), self.b).expect("length checked");
        let dro = match self.kind.dro_variant() {
            Some(variant) => {
                if self.variant.is_some_and(|v| v != variant) {
                    return Err(Error::parse(None, "variant does not match kind"));
                }
                let missing = |f: &str| Error::parse(None, format!("robust model is missing field {f:?}"));
                let cfg = DroConfig {
                    family: self.kind.family(),
                    variant,
                    r: self.r.ok_or_else(|| missing("r"))?,
                    epsilon: self.epsilon.ok_or_else(|| missing("epsilon"))?,
                    lipschitz: self.lipschitz.unwrap_or(1.0),
                };
                cfg.validate()?;
                Some(cfg)
            }
            None => None,
        };
        Ok(FittedModel {
            kind: self.kind,
            coefficients,
            dro,
            lambda: self.lambda,
            n_components: self.n_components,
            solver: self.solver,
            seed: self.seed,
            objective_trace: Vec::new(),
            iterations: self.iterations,
            converged: self.converged,
        })
    }
}

//! The `L_{r,s}` matrix norm family.
//!
//! `‖A‖_{r,s}` summarizes every column of `A` by its `ℓ_r` norm and returns
//! the `ℓ_s` norm of the resulting vector:
//!
//! ```text
//! ‖A‖_{r,s} = ( Σ_j ( Σ_i |a_ij|^r )^{s/r} )^{1/s}
//! ```
//!
//! With `r = s = 2` this is the Frobenius norm. Every regularizer in the
//! crate is evaluated through [`lrs_norm`], and every regularizer subgradient
//! through [`lrs_subgradient`].

use std::fmt;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Order of an `ℓ_p` norm: a real `p ≥ 1` or infinity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormOrder {
    Finite(f64),
    Infinity,
}

impl NormOrder {
    pub const ONE: NormOrder = NormOrder::Finite(1.0);
    pub const TWO: NormOrder = NormOrder::Finite(2.0);

    /// Validated constructor; `f64::INFINITY` maps to [`NormOrder::Infinity`].
    pub fn new(p: f64) -> Result<Self> {
        if p == f64::INFINITY {
            Ok(NormOrder::Infinity)
        } else if p.is_finite() && p >= 1.0 {
            Ok(NormOrder::Finite(p))
        } else {
            Err(Error::domain(format!("norm order must be >= 1, got {p}")))
        }
    }

    /// The conjugate exponent `s` with `1/r + 1/s = 1`.
    pub fn dual(self) -> NormOrder {
        match self {
            NormOrder::Infinity => NormOrder::ONE,
            NormOrder::Finite(1.0) => NormOrder::Infinity,
            NormOrder::Finite(p) => NormOrder::Finite(p / (p - 1.0)),
        }
    }

    /// Value as a float, with `f64::INFINITY` for the infinite order.
    pub fn as_f64(self) -> f64 {
        match self {
            NormOrder::Finite(p) => p,
            NormOrder::Infinity => f64::INFINITY,
        }
    }

    /// `1/p`, exactly zero for the infinite order.
    pub fn reciprocal(self) -> f64 {
        match self {
            NormOrder::Finite(p) => 1.0 / p,
            NormOrder::Infinity => 0.0,
        }
    }

    fn validate(self) -> Result<Self> {
        match self {
            NormOrder::Finite(p) if !(p.is_finite() && p >= 1.0) => {
                Err(Error::domain(format!("norm order must be >= 1, got {p}")))
            }
            other => Ok(other),
        }
    }
}

impl Default for NormOrder {
    fn default() -> Self {
        NormOrder::TWO
    }
}

impl fmt::Display for NormOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NormOrder::Finite(p) => write!(f, "{p}"),
            NormOrder::Infinity => f.write_str("inf"),
        }
    }
}

impl std::str::FromStr for NormOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinity" => Ok(NormOrder::Infinity),
            other => {
                let p: f64 = other
                    .parse()
                    .map_err(|_| Error::domain(format!("not a norm order: {s:?}")))?;
                NormOrder::new(p)
            }
        }
    }
}

// Finite orders serialize as JSON numbers, the infinite order as "inf".
impl Serialize for NormOrder {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            NormOrder::Finite(p) => serializer.serialize_f64(*p),
            NormOrder::Infinity => serializer.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for NormOrder {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Num(p) => NormOrder::new(p).map_err(de::Error::custom),
            Raw::Text(s) => s.parse().map_err(de::Error::custom),
        }
    }
}

/// The dual exponent of `r`.
pub fn dual_exponent(r: NormOrder) -> NormOrder {
    r.dual()
}

pub(crate) fn ensure_finite(a: ArrayView2<'_, f64>) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::domain("matrix has a non-finite entry"))
    }
}

/// `ℓ_p` norm of a vector. Finite orders other than 1 and 2 are evaluated on
/// the vector rescaled by its largest magnitude so large entries do not
/// overflow.
pub fn vector_norm(v: ArrayView1<'_, f64>, p: NormOrder) -> f64 {
    match p {
        NormOrder::Infinity => v.iter().fold(0.0, |m, x| m.max(x.abs())),
        NormOrder::Finite(1.0) => v.iter().map(|x| x.abs()).sum(),
        NormOrder::Finite(2.0) => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
        NormOrder::Finite(q) => {
            let m = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
            if m == 0.0 {
                return 0.0;
            }
            m * v.iter().map(|x| (x.abs() / m).powf(q)).sum::<f64>().powf(1.0 / q)
        }
    }
}

/// A subgradient `g` of the `ℓ_p` norm at `v`, with `⟨g, v⟩ = ‖v‖_p`.
///
/// Kinks resolve to the minimum-norm element of the subdifferential: zero
/// coordinates get zero for `p = 1`, ties for `p = ∞` share the weight
/// equally, and the origin maps to the zero vector.
pub fn vector_norm_subgradient(v: ArrayView1<'_, f64>, p: NormOrder) -> Array1<f64> {
    let m = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if m == 0.0 {
        return Array1::zeros(v.len());
    }
    match p {
        NormOrder::Infinity => {
            let ties = v.iter().filter(|x| x.abs() == m).count() as f64;
            v.mapv(|x| if x.abs() == m { x.signum() / ties } else { 0.0 })
        }
        NormOrder::Finite(1.0) => v.mapv(sign),
        NormOrder::Finite(q) => {
            let scaled = v.mapv(|x| x / m);
            let n = vector_norm(scaled.view(), p);
            scaled.mapv(|u| sign(u) * (u.abs() / n).powf(q - 1.0))
        }
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn column_norms(a: ArrayView2<'_, f64>, r: NormOrder) -> Array1<f64> {
    a.axis_iter(Axis(1)).map(|col| vector_norm(col, r)).collect()
}

/// `‖A‖_{r,s}`: the `ℓ_s` norm of the vector of column `ℓ_r` norms.
pub fn lrs_norm(a: ArrayView2<'_, f64>, r: NormOrder, s: NormOrder) -> Result<f64> {
    r.validate()?;
    s.validate()?;
    ensure_finite(a)?;
    Ok(vector_norm(column_norms(a, r).view(), s))
}

/// A subgradient `G` of `‖·‖_{r,s}` at `A`, satisfying `⟨G, A⟩ = ‖A‖_{r,s}`.
///
/// Built by the chain rule: the outer `ℓ_s` subgradient over column norms
/// scales each column's inner `ℓ_r` subgradient. Zero columns and zero
/// matrices contribute zero.
pub fn lrs_subgradient(a: ArrayView2<'_, f64>, r: NormOrder, s: NormOrder) -> Result<Array2<f64>> {
    r.validate()?;
    s.validate()?;
    ensure_finite(a)?;
    let norms = column_norms(a, r);
    let outer = vector_norm_subgradient(norms.view(), s);
    let mut g = Array2::zeros(a.raw_dim());
    for (j, (col, mut gcol)) in a
        .axis_iter(Axis(1))
        .zip(g.axis_iter_mut(Axis(1)))
        .enumerate()
    {
        if outer[j] != 0.0 {
            let inner = vector_norm_subgradient(col, r);
            gcol.assign(&(inner * outer[j]));
        }
    }
    Ok(g)
}

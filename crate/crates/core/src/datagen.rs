//! Seeded synthetic data for the regression and classification experiments.
//!
//! # Random streams
//!
//! Every generator draws from a ChaCha20 stream whose 256-bit key is the
//! little-endian concatenation of `(seed, run, fnv1a64(tag), 0)`. Distinct
//! `(seed, run, tag)` triples therefore get independent streams, and a
//! replication can be regenerated in isolation or in parallel.
//!
//! Standard normals come from `rand_distr::StandardNormal` (ziggurat on top
//! of the ChaCha uniforms). Correlated Gaussians are `L z` with `L` the
//! lower Cholesky factor of the covariance.
//!
//! # Regression data
//!
//! `x ~ N(0, Σ_x)` with `(Σ_x)_ij = 0.9^|i-j|`, `B*` standard normal and
//! `y = B*'x + η` with `η ~ N(0, I_K)`. Response outliers add a further
//! `N(0, Σ_y)` draw to `y`; covariate outliers draw `x` as the sum of
//! `N(0, Σ_x)` and `N(0, Σ_noise)`.
//!
//! # Classification data
//!
//! `x ~ N(0, I_p)` and the label is a single multinomial trial with
//! probabilities `softmax(B*'x + η)`. Covariate outliers add `N(0, Σ_noise)`
//! to `x` and keep the same conditional label law.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{one_hot, Dataset, Task};
use crate::error::{Error, Result};
use crate::linalg::cholesky_lower;
use crate::losses::softmax;

/// The generator every sampling routine in this crate consumes.
pub type StreamRng = ChaCha20Rng;

/// Correlation of regression covariates.
pub const MLR_COVARIATE_RHO: f64 = 0.9;
/// AR-1 parameter of the extra response noise for response outliers.
pub const MLR_RESPONSE_OUTLIER_RHO: f64 = -0.9;
/// AR-1 parameter of the covariate noise for regression covariate outliers.
pub const MLR_COVARIATE_OUTLIER_RHO: f64 = -0.5;
/// AR-1 parameter of the covariate noise for classification outliers.
pub const MLG_COVARIATE_OUTLIER_RHO: f64 = 0.7;

fn fnv1a64(tag: &str) -> u64 {
    tag.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Independent random stream for `(seed, run, tag)`.
pub fn stream_rng(seed: u64, run: u64, tag: &str) -> StreamRng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&run.to_le_bytes());
    key[16..24].copy_from_slice(&fnv1a64(tag).to_le_bytes());
    ChaCha20Rng::from_seed(key)
}

/// Which part of a sample an outlier perturbs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutlierKind {
    None,
    Response,
    Covariate,
}

/// Outlier type, the fraction of contaminated rows and the AR-1 parameter of
/// the contaminating noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutlierSpec {
    pub kind: OutlierKind,
    pub fraction: f64,
    pub rho: f64,
}

impl OutlierSpec {
    pub fn new(kind: OutlierKind, fraction: f64, rho: f64) -> Result<Self> {
        let spec = OutlierSpec { kind, fraction, rho };
        spec.validate()?;
        Ok(spec)
    }

    pub fn none() -> Self {
        OutlierSpec {
            kind: OutlierKind::None,
            fraction: 0.0,
            rho: 0.0,
        }
    }

    pub fn mlr_response(fraction: f64) -> Result<Self> {
        OutlierSpec::new(OutlierKind::Response, fraction, MLR_RESPONSE_OUTLIER_RHO)
    }

    pub fn mlr_covariate(fraction: f64) -> Result<Self> {
        OutlierSpec::new(OutlierKind::Covariate, fraction, MLR_COVARIATE_OUTLIER_RHO)
    }

    pub fn mlg_covariate(fraction: f64) -> Result<Self> {
        OutlierSpec::new(OutlierKind::Covariate, fraction, MLG_COVARIATE_OUTLIER_RHO)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.fraction) {
            return Err(Error::domain(format!("outlier fraction {} outside [0, 1]", self.fraction)));
        }
        if self.rho.is_nan() || self.rho.abs() >= 1.0 {
            return Err(Error::domain(format!("AR-1 parameter {} must satisfy |rho| < 1", self.rho)));
        }
        Ok(())
    }

    /// `floor(fraction * n)` for the active kinds, zero for `None`.
    pub fn outlier_count(&self, n: usize) -> usize {
        match self.kind {
            OutlierKind::None => 0,
            // the slack absorbs representation error such as 0.3 * 60 = 17.999...
            _ => ((self.fraction * n as f64) + 1e-9).floor() as usize,
        }
    }
}

/// `Σ_ij = rho^|i-j|`.
pub fn ar1_cov(dim: usize, rho: f64) -> Result<Array2<f64>> {
    if dim == 0 {
        return Err(Error::domain("covariance dimension must be >= 1"));
    }
    if rho.is_nan() || rho.abs() >= 1.0 {
        return Err(Error::domain(format!("AR-1 parameter {rho} must satisfy |rho| < 1")));
    }
    Ok(Array2::from_shape_fn((dim, dim), |(i, j)| rho.powi(i.abs_diff(j) as i32)))
}

/// Matrix of i.i.d. standard normals, filled row by row.
pub fn standard_normal_matrix(rows: usize, cols: usize, rng: &mut StreamRng) -> Array2<f64> {
    let data: Vec<f64> = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    Array2::from_shape_vec((rows, cols), data).expect("buffer matches shape")
}

/// `n` rows drawn i.i.d. from `N(0, cov)`.
pub fn sample_mvn(cov: ArrayView2<'_, f64>, n: usize, rng: &mut StreamRng) -> Result<Array2<f64>> {
    let l = cholesky_lower(cov)?;
    let z = standard_normal_matrix(n, cov.nrows(), rng);
    Ok(z.dot(&l.t()))
}

fn outlier_mask(n: usize, count: usize, rng: &mut StreamRng) -> Vec<bool> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let mut mask = vec![false; n];
    for &i in &idx[..count] {
        mask[i] = true;
    }
    mask
}

fn flagged(mask: &[bool]) -> Vec<usize> {
    mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i).collect()
}

fn add_rows(target: &mut Array2<f64>, rows: &[usize], noise: &Array2<f64>) {
    for (r, &i) in rows.iter().enumerate() {
        let mut row = target.row_mut(i);
        row += &noise.row(r);
    }
}

/// Ground truth `B*` of the regression model; samples any number of
/// datasets sharing it.
#[derive(Debug, Clone)]
pub struct MlrGenerator {
    true_b: Array2<f64>,
}

impl MlrGenerator {
    pub fn new(p: usize, k: usize, rng: &mut StreamRng) -> Result<Self> {
        if p == 0 || k == 0 {
            return Err(Error::domain("p and K must be >= 1"));
        }
        Ok(MlrGenerator {
            true_b: standard_normal_matrix(p, k, rng),
        })
    }

    pub fn with_truth(true_b: Array2<f64>) -> Self {
        MlrGenerator { true_b }
    }

    pub fn true_b(&self) -> &Array2<f64> {
        &self.true_b
    }

    pub fn sample(&self, n: usize, spec: &OutlierSpec, rng: &mut StreamRng) -> Result<Dataset> {
        spec.validate()?;
        if n == 0 {
            return Err(Error::domain("N must be >= 1"));
        }
        let (p, k) = self.true_b.dim();
        let mask = outlier_mask(n, spec.outlier_count(n), rng);
        let rows = flagged(&mask);
        let mut x = sample_mvn(ar1_cov(p, MLR_COVARIATE_RHO)?.view(), n, rng)?;
        if spec.kind == OutlierKind::Covariate && !rows.is_empty() {
            let noise = sample_mvn(ar1_cov(p, spec.rho)?.view(), rows.len(), rng)?;
            add_rows(&mut x, &rows, &noise);
        }
        let mut y = x.dot(&self.true_b) + standard_normal_matrix(n, k, rng);
        if spec.kind == OutlierKind::Response && !rows.is_empty() {
            let noise = sample_mvn(ar1_cov(k, spec.rho)?.view(), rows.len(), rng)?;
            add_rows(&mut y, &rows, &noise);
        }
        Dataset::new(x, y, mask, Task::Regression)?.with_truth(self.true_b.clone())
    }
}

/// Ground truth `B*` of the classification model.
#[derive(Debug, Clone)]
pub struct MlgGenerator {
    true_b: Array2<f64>,
}

impl MlgGenerator {
    pub fn new(p: usize, k: usize, rng: &mut StreamRng) -> Result<Self> {
        if p == 0 || k == 0 {
            return Err(Error::domain("p and K must be >= 1"));
        }
        Ok(MlgGenerator {
            true_b: standard_normal_matrix(p, k, rng),
        })
    }

    pub fn with_truth(true_b: Array2<f64>) -> Self {
        MlgGenerator { true_b }
    }

    pub fn true_b(&self) -> &Array2<f64> {
        &self.true_b
    }

    pub fn sample(&self, n: usize, spec: &OutlierSpec, rng: &mut StreamRng) -> Result<Dataset> {
        spec.validate()?;
        if n == 0 {
            return Err(Error::domain("N must be >= 1"));
        }
        if spec.kind == OutlierKind::Response {
            return Err(Error::domain("classification data supports covariate outliers only"));
        }
        let (p, k) = self.true_b.dim();
        let mask = outlier_mask(n, spec.outlier_count(n), rng);
        let rows = flagged(&mask);
        let mut x = standard_normal_matrix(n, p, rng);
        if spec.kind == OutlierKind::Covariate && !rows.is_empty() {
            let noise = sample_mvn(ar1_cov(p, spec.rho)?.view(), rows.len(), rng)?;
            add_rows(&mut x, &rows, &noise);
        }
        let scores = x.dot(&self.true_b) + standard_normal_matrix(n, k, rng);
        let labels: Vec<usize> = scores
            .axis_iter(Axis(0))
            .map(|s| {
                let probs = softmax(s.to_owned());
                draw_category(&probs, rng.random::<f64>())
            })
            .collect();
        Dataset::new(x, one_hot(&labels, k), mask, Task::Classification)?.with_truth(self.true_b.clone())
    }
}

/// Inverse-CDF draw of a category from `probs` given `u ∈ [0, 1)`.
fn draw_category(probs: &Array1<f64>, u: f64) -> usize {
    let mut acc = 0.0;
    for (i, &pr) in probs.iter().enumerate() {
        acc += pr;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// A regression dataset with a fresh `B*`, both drawn from `seed`.
pub fn make_mlr_dataset(p: usize, k: usize, n: usize, spec: &OutlierSpec, seed: u64) -> Result<Dataset> {
    let mut rng = stream_rng(seed, 0, "mlr");
    MlrGenerator::new(p, k, &mut rng)?.sample(n, spec, &mut rng)
}

/// A classification dataset with a fresh `B*`, both drawn from `seed`.
pub fn make_mlg_dataset(p: usize, k: usize, n: usize, spec: &OutlierSpec, seed: u64) -> Result<Dataset> {
    let mut rng = stream_rng(seed, 0, "mlg");
    MlgGenerator::new(p, k, &mut rng)?.sample(n, spec, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::min_eigenvalue;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn sample_cov(z: &Array2<f64>) -> Array2<f64> {
        // zero-mean model, so the second moment is the covariance
        z.t().dot(z) / z.nrows() as f64
    }

    fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
        (a - b).iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    #[test]
    fn ar1_values() {
        let c = ar1_cov(3, 0.9).unwrap();
        assert_abs_diff_eq!(c, array![[1.0, 0.9, 0.81], [0.9, 1.0, 0.9], [0.81, 0.9, 1.0]], epsilon = 1e-15);
        assert_eq!(ar1_cov(2, 0.0).unwrap(), Array2::<f64>::eye(2));
        assert!(ar1_cov(3, 1.0).is_err());
        assert!(ar1_cov(3, -1.2).is_err());
    }

    #[test]
    fn ar1_positive_definite() {
        assert!(min_eigenvalue(ar1_cov(4, -0.9).unwrap().view()) > 0.0);
        for rho in [0.9, -0.9, -0.5, 0.7] {
            for dim in 1..8 {
                let c = ar1_cov(dim, rho).unwrap();
                assert!(min_eigenvalue(c.view()) > 0.0, "rho={rho} dim={dim}");
            }
        }
    }

    #[test]
    fn mvn_is_reproducible() {
        let cov = Array2::eye(2);
        let a = sample_mvn(cov.view(), 1, &mut stream_rng(7, 0, "t")).unwrap();
        let b = sample_mvn(cov.view(), 1, &mut stream_rng(7, 0, "t")).unwrap();
        assert_eq!(a, b);
        let c = sample_mvn(cov.view(), 1, &mut stream_rng(7, 1, "t")).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn mvn_rejects_degenerate_covariance() {
        let cov = Array2::<f64>::zeros((2, 2));
        assert!(matches!(
            sample_mvn(cov.view(), 3, &mut stream_rng(1, 0, "t")),
            Err(Error::Factorization(_))
        ));
    }

    #[test]
    fn mvn_matches_covariance() {
        let cov = ar1_cov(3, 0.9).unwrap();
        let z = sample_mvn(cov.view(), 100_000, &mut stream_rng(11, 0, "mc")).unwrap();
        assert!(max_abs_diff(&sample_cov(&z), &cov) <= 0.02);
    }

    #[test]
    fn mlr_shapes_and_clean_mask() {
        let d = make_mlr_dataset(5, 3, 100, &OutlierSpec::none(), 1).unwrap();
        assert_eq!(d.x().dim(), (100, 5));
        assert_eq!(d.y().dim(), (100, 3));
        assert!(d.outliers().iter().all(|&o| !o));
        let d = make_mlr_dataset(5, 3, 100, &OutlierSpec::mlr_response(0.0).unwrap(), 1).unwrap();
        assert_eq!(d.outlier_count(), 0);
    }

    #[test]
    fn mlr_response_outlier_residual_covariance() {
        let spec = OutlierSpec::mlr_response(1.0).unwrap();
        let d = make_mlr_dataset(5, 3, 100_000, &spec, 3).unwrap();
        let resid = d.y() - &d.x().dot(d.true_b().unwrap());
        let target = Array2::<f64>::eye(3) + ar1_cov(3, -0.9).unwrap();
        assert!(max_abs_diff(&sample_cov(&resid), &target) <= 0.05);
    }

    #[test]
    fn mlr_covariate_outlier_covariance() {
        let spec = OutlierSpec::mlr_covariate(1.0).unwrap();
        let d = make_mlr_dataset(4, 2, 100_000, &spec, 5).unwrap();
        let target = ar1_cov(4, 0.9).unwrap() + ar1_cov(4, -0.5).unwrap();
        assert!(max_abs_diff(&sample_cov(d.x()), &target) <= 0.05);
    }

    #[test]
    fn outlier_count_is_floor() {
        for (frac, n, expected) in [(0.3, 60, 18), (0.25, 10, 2), (1.0, 7, 7), (0.57, 100, 57), (0.199, 10, 1)] {
            let spec = OutlierSpec::mlr_covariate(frac).unwrap();
            let d = make_mlr_dataset(2, 2, n, &spec, 9).unwrap();
            assert_eq!(d.outlier_count(), expected, "fraction {frac} n {n}");
        }
    }

    #[test]
    fn mlg_shapes_one_hot() {
        let d = make_mlg_dataset(5, 3, 100, &OutlierSpec::none(), 2).unwrap();
        assert_eq!(d.x().dim(), (100, 5));
        assert_eq!(d.y().dim(), (100, 3));
        for row in d.y().axis_iter(Axis(0)) {
            assert_eq!(row.sum(), 1.0);
        }
        assert!(d.outliers().iter().all(|&o| !o));
        let spec = OutlierSpec::mlg_covariate(0.0).unwrap();
        let d = make_mlg_dataset(5, 3, 50, &spec, 2).unwrap();
        assert_eq!(d.outlier_count(), 0);
    }

    #[test]
    fn mlg_rejects_response_outliers() {
        let spec = OutlierSpec::mlr_response(0.2).unwrap();
        assert!(make_mlg_dataset(5, 3, 10, &spec, 2).is_err());
    }

    #[test]
    fn mlg_zero_truth_balanced_classes() {
        let gen = MlgGenerator::with_truth(Array2::zeros((5, 3)));
        let d = gen
            .sample(60_000, &OutlierSpec::none(), &mut stream_rng(4, 0, "balance"))
            .unwrap();
        let freq = d.y().sum_axis(Axis(0)) / 60_000.0;
        for f in freq.iter() {
            assert!((f - 1.0 / 3.0).abs() <= 0.01, "class frequency {f}");
        }
    }

    #[test]
    fn seeds_determine_datasets() {
        let spec = OutlierSpec::mlg_covariate(0.2).unwrap();
        let a = make_mlg_dataset(5, 3, 40, &spec, 10).unwrap();
        let b = make_mlg_dataset(5, 3, 40, &spec, 10).unwrap();
        let c = make_mlg_dataset(5, 3, 40, &spec, 11).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let a = make_mlr_dataset(5, 3, 40, &spec, 10).unwrap();
        let b = make_mlr_dataset(5, 3, 40, &spec, 10).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn category_draw_boundaries() {
        let probs = array![0.25, 0.5, 0.25];
        assert_eq!(draw_category(&probs, 0.0), 0);
        assert_eq!(draw_category(&probs, 0.25), 1);
        assert_eq!(draw_category(&probs, 0.9999), 2);
    }
}

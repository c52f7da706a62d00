//! Thin bridge to `nalgebra` for the factorizations the crate needs.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};

pub(crate) fn to_na(a: ArrayView2<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

pub(crate) fn from_na(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// Lower-triangular Cholesky factor `L` with `A = L L'`.
pub fn cholesky_lower(a: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if a.nrows() != a.ncols() {
        return Err(Error::shape(format!(
            "cholesky needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let chol = nalgebra::Cholesky::new(to_na(a))
        .ok_or_else(|| Error::Factorization("matrix is not positive definite".into()))?;
    Ok(from_na(&chol.l()))
}

/// Solves `A X = B` for symmetric positive definite `A`.
pub fn solve_spd(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let chol = nalgebra::Cholesky::new(to_na(a))
        .ok_or_else(|| Error::Factorization("matrix is not positive definite".into()))?;
    Ok(from_na(&chol.solve(&to_na(b))))
}

/// Eigen-decomposition of a symmetric matrix, eigenvalues sorted in
/// descending order with eigenvectors in matching columns.
pub fn symmetric_eigen(a: ArrayView2<'_, f64>) -> (Array1<f64>, Array2<f64>) {
    let eig = nalgebra::SymmetricEigen::new(to_na(a));
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let n = a.nrows();
    let vectors = Array2::from_shape_fn((n, order.len()), |(r, c)| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(a: ArrayView2<'_, f64>) -> f64 {
    let (values, _) = symmetric_eigen(a);
    values[values.len() - 1]
}

/// Solves the normal equations `G X = R` with a rank-revealing SVD of the
/// symmetric Gram matrix `G`. Returns `None` when `G` is numerically singular.
pub(crate) fn solve_gram(g: ArrayView2<'_, f64>, rhs: ArrayView2<'_, f64>) -> Option<Array2<f64>> {
    let svd = nalgebra::SVD::new(to_na(g), true, true);
    let max_sv = svd.singular_values.max();
    let tol = max_sv * 1e-12 * g.nrows() as f64;
    if max_sv == 0.0 || svd.rank(tol) < g.nrows() {
        return None;
    }
    svd.solve(&to_na(rhs), tol).ok().map(|x| from_na(&x))
}

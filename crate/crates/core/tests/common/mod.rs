#![allow(dead_code)]

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wdro::NormOrder;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Entries uniform on `[-scale, scale]`.
pub fn uniform_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-scale..=scale))
}

pub fn orders() -> Vec<NormOrder> {
    [1.0, 1.5, 2.0, 3.0]
        .into_iter()
        .map(|p| NormOrder::new(p).unwrap())
        .chain(std::iter::once(NormOrder::Infinity))
        .collect()
}

/// Hölder pairs `(r, s)` with `1/r + 1/s = 1` from the order grid.
pub fn dual_pairs() -> Vec<(NormOrder, NormOrder)> {
    vec![
        (NormOrder::ONE, NormOrder::Infinity),
        (NormOrder::new(1.5).unwrap(), NormOrder::new(3.0).unwrap()),
        (NormOrder::TWO, NormOrder::TWO),
        (NormOrder::new(3.0).unwrap(), NormOrder::new(1.5).unwrap()),
        (NormOrder::Infinity, NormOrder::ONE),
    ]
}

/// `ℓ_p` norm written out from scratch.
pub fn lp(v: &[f64], p: NormOrder) -> f64 {
    match p {
        NormOrder::Infinity => v.iter().fold(0.0, |m, x| m.max(x.abs())),
        NormOrder::Finite(p) => v.iter().map(|x| x.abs().powf(p)).sum::<f64>().powf(1.0 / p),
    }
}

pub fn frobenius(a: &Array2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn inner(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Central finite-difference gradient of `f` at `b`.
pub fn fd_gradient(f: impl Fn(&Array2<f64>) -> f64, b: &Array2<f64>, h: f64) -> Array2<f64> {
    let mut g = Array2::zeros(b.raw_dim());
    let mut probe = b.clone();
    for idx in 0..b.len() {
        let (i, j) = (idx / b.ncols(), idx % b.ncols());
        let orig = probe[[i, j]];
        probe[[i, j]] = orig + h;
        let up = f(&probe);
        probe[[i, j]] = orig - h;
        let down = f(&probe);
        probe[[i, j]] = orig;
        g[[i, j]] = (up - down) / (2.0 * h);
    }
    g
}

/// `‖a − b‖_F / max(‖b‖_F, floor)`.
pub fn rel_err(a: &Array2<f64>, b: &Array2<f64>, floor: f64) -> f64 {
    frobenius(&(a - b)) / frobenius(b).max(floor)
}

/// Scalar penalties of the regression relaxations written from their sums:
/// `(Σ_i ‖b_i‖_s^r)^{1/r}` over the rows `b_i = (−B_1i, …, −B_pi, e_i)` and
/// `‖(v_1, …, v_p, 1, …, 1)‖_s` with `v_j = Σ_i |B_ji|`.
pub fn mlr_scalar_penalties(b: &Array2<f64>, r: NormOrder, s: NormOrder) -> (f64, f64) {
    let (p, k) = b.dim();
    let row_norms: Vec<f64> = (0..k)
        .map(|i| {
            let mut row: Vec<f64> = (0..p).map(|j| -b[[j, i]]).collect();
            row.extend((0..k).map(|l| if l == i { 1.0 } else { 0.0 }));
            lp(&row, s)
        })
        .collect();
    let sr = lp(&row_norms, r);
    let mut v: Vec<f64> = (0..p).map(|j| (0..k).map(|i| b[[j, i]].abs()).sum()).collect();
    v.extend(std::iter::repeat_n(1.0, k));
    (sr, lp(&v, s))
}

/// `‖A‖_{r,s}` from the column-wise definition.
pub fn lrs_oracle(a: &Array2<f64>, r: NormOrder, s: NormOrder) -> f64 {
    let cols: Vec<f64> = a.columns().into_iter().map(|c| lp(&c.to_vec(), r)).collect();
    lp(&cols, s)
}

/// Mean multinomial log-loss written with a plain max-shifted sum.
pub fn logloss_oracle(b: &Array2<f64>, x: &Array2<f64>, labels: &[usize]) -> f64 {
    let scores = x.dot(b);
    let total: f64 = scores
        .rows()
        .into_iter()
        .zip(labels)
        .map(|(s, &y)| {
            let m = s.fold(f64::NEG_INFINITY, |a, &v| a.max(v));
            m + s.iter().map(|v| (v - m).exp()).sum::<f64>().ln() - s[y]
        })
        .sum();
    total / labels.len() as f64
}

/// Least `ℓ1` perturbation `d` with `a'(x + d) ≥ 0`, by enumerating the
/// basic feasible solutions of the split LP
/// `min 1'(d⁺ + d⁻)  s.t.  a'd⁺ − a'd⁻ − σ = −a'x,  d⁺, d⁻, σ ≥ 0`.
/// With one equality row every vertex has a single basic variable.
pub fn halfspace_lp(a: &Array1<f64>, x: &Array1<f64>) -> f64 {
    let rhs = -a.dot(x);
    let mut best = f64::INFINITY;
    // σ basic: feasible iff rhs ≤ 0, cost 0
    if -rhs >= 0.0 {
        best = 0.0;
    }
    for &ai in a.iter() {
        for coef in [ai, -ai] {
            if coef != 0.0 {
                let value = rhs / coef;
                if value >= 0.0 {
                    best = best.min(value);
                }
            }
        }
    }
    best
}

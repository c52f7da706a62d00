mod common;

use common::*;
use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::Rng;
use wdro::datagen::{make_mlg_dataset, OutlierSpec};
use wdro::metrics::{
    covariate_radius, cvar, flip_distance, generalization_bound, model_bound, mpd_coefficients, train_error_cov, wmse,
    BoundInputs,
};
use wdro::model::argmax;
use wdro::norms::lrs_norm;
use wdro::{fit_dro, DroConfig, NormOrder, SolverConfig, Variant};

/// MPD over a point set from the LP oracle.
fn mpd_oracle(b: &Array2<f64>, x: &Array2<f64>) -> f64 {
    let mut best = f64::INFINITY;
    for row in x.rows() {
        let k = argmax(row.dot(b).view());
        for j in (0..b.ncols()).filter(|&j| j != k) {
            let a: Array1<f64> = &b.column(j) - &b.column(k);
            best = best.min(halfspace_lp(&a, &row.to_owned()));
        }
    }
    best
}

#[test]
fn mpd_matches_lp_oracle() {
    let mut g = rng(21);
    for _ in 0..50 {
        let (p, k, m) = (g.random_range(1..6), g.random_range(2..5), g.random_range(1..20));
        let b = uniform_matrix(&mut g, p, k, 2.0);
        let x = uniform_matrix(&mut g, m, p, 3.0);
        let got = mpd_coefficients(b.view(), x.view()).unwrap();
        let want = mpd_oracle(&b, &x);
        assert!((got - want).abs() <= 1e-6, "{got} vs {want}");
    }
}

#[test]
fn lp_oracle_is_not_beaten_by_random_feasible_points() {
    let mut g = rng(22);
    for _ in 0..50 {
        let a = Array1::from_shape_simple_fn(3, || g.random_range(-2.0..2.0));
        let x = Array1::from_shape_simple_fn(3, || g.random_range(-2.0..2.0));
        let opt = halfspace_lp(&a, &x);
        for _ in 0..200 {
            let d = Array1::from_shape_simple_fn(3, || g.random_range(-4.0..4.0));
            if a.dot(&(&x + &d)) >= 0.0 {
                assert!(d.iter().map(|v| v.abs()).sum::<f64>() >= opt - 1e-12);
            }
        }
    }
}

#[test]
fn mpd_invariant_to_common_weight_shift() {
    let mut g = rng(23);
    for _ in 0..50 {
        let b = uniform_matrix(&mut g, 4, 3, 2.0);
        let x = uniform_matrix(&mut g, 10, 4, 3.0);
        let c = Array1::from_shape_simple_fn(4, || g.random_range(-5.0..5.0));
        let mut shifted = b.clone();
        for mut col in shifted.columns_mut() {
            col += &c;
        }
        let a = mpd_coefficients(b.view(), x.view()).unwrap();
        let s = mpd_coefficients(shifted.view(), x.view()).unwrap();
        assert!((a - s).abs() <= 1e-9 * a.max(1.0));
    }
}

#[test]
fn flip_distance_examples() {
    let b = ndarray::array![[1.0, -1.0], [0.0, 0.0]];
    assert_eq!(flip_distance(b.view(), ndarray::array![2.0, 0.0].view(), 0, 1), 2.0);
    assert_eq!(flip_distance(b.view(), ndarray::array![0.0, 5.0].view(), 0, 1), 0.0);
    let same = Array2::ones((2, 2));
    assert_eq!(flip_distance(same.view(), ndarray::array![1.0, 1.0].view(), 0, 1), 0.0);
}

#[test]
fn residual_covariance_matches_gram_oracle() {
    let mut g = rng(24);
    for _ in 0..20 {
        let y = uniform_matrix(&mut g, 30, 3, 2.0);
        let yhat = uniform_matrix(&mut g, 30, 3, 2.0);
        let sigma = train_error_cov(y.view(), yhat.view(), 2, 3).unwrap();
        let mut oracle = Array2::<f64>::zeros((3, 3));
        for i in 0..30 {
            for a in 0..3 {
                for b in 0..3 {
                    oracle[[a, b]] += (y[[i, a]] - yhat[[i, a]]) * (y[[i, b]] - yhat[[i, b]]);
                }
            }
        }
        oracle /= 24.0;
        for a in 0..3 {
            oracle[[a, a]] += 1e-8;
        }
        assert!(rel_err(&sigma, &oracle, 1.0) <= 1e-12);
    }
}

#[test]
fn bound_matches_formula_oracle_for_fitted_model() {
    let train = make_mlg_dataset(5, 3, 100, &OutlierSpec::none(), 31).unwrap();
    let cfg = DroConfig::mlg(Variant::Sr, 0.05).unwrap();
    let model = fit_dro(&train, &cfg, &SolverConfig::default()).unwrap();
    let b = &model.coefficients;
    let got = model_bound(b.view(), &cfg, &train, 0.1).unwrap();

    let loss = logloss_oracle(b, train.x(), &train.labels());
    let s = NormOrder::TWO;
    let c_bar = 3f64.sqrt() * lrs_oracle(b, s, NormOrder::TWO) + lrs_oracle(b, s, NormOrder::ONE);
    let r_x = train
        .x()
        .rows()
        .into_iter()
        .map(|r| r.dot(&r).sqrt())
        .fold(0.0, f64::max);
    let a = r_x * c_bar + 3f64.ln();
    let oracle = loss + 2.0 * a / 10.0 + a * (8.0 * 20f64.ln() / 100.0).sqrt();
    assert!((got - oracle).abs() <= 1e-10, "{got} vs {oracle}");
    assert!((covariate_radius(train.x().view(), NormOrder::TWO) - r_x).abs() <= 1e-12);
    assert!((lrs_norm(b.view(), s, NormOrder::TWO).unwrap() - lrs_oracle(b, s, NormOrder::TWO)).abs() <= 1e-12);
}

#[test]
fn bound_limits_and_errors() {
    let mut inputs = BoundInputs {
        train_avg_loss: 0.3,
        r_x: 2.0,
        c_bar: 1.5,
        k: 3,
        n: 1_000_000_000_000,
        delta: 0.1,
    };
    assert!((generalization_bound(&inputs).unwrap() - 0.3).abs() <= 1e-4);
    inputs.delta = 1.0;
    assert!(generalization_bound(&inputs).is_err());
    inputs.delta = 0.0;
    assert!(generalization_bound(&inputs).is_err());
}

proptest! {
    #[test]
    fn cvar_dominates_mean_and_matches_sort_oracle(
        losses in prop::collection::vec(0.0..10.0f64, 1..60),
        alpha in 0.01..0.99f64,
    ) {
        let c = cvar(&losses, alpha).unwrap();
        let mean = losses.iter().sum::<f64>() / losses.len() as f64;
        prop_assert!(c >= mean - 1e-12);
        let mut sorted = losses.clone();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let m = ((1.0 - alpha) * losses.len() as f64 - 1e-9).ceil().max(1.0) as usize;
        let oracle = sorted[..m].iter().sum::<f64>() / m as f64;
        prop_assert!((c - oracle).abs() <= 1e-12);
    }

    #[test]
    fn wmse_nonnegative_and_zero_iff_exact(seed in any::<u64>(), exact in any::<bool>()) {
        let mut g = rng(seed);
        let y = uniform_matrix(&mut g, 8, 2, 2.0);
        let pred = if exact { y.clone() } else { uniform_matrix(&mut g, 8, 2, 2.0) };
        let a = uniform_matrix(&mut g, 2, 2, 1.0);
        let sigma = a.dot(&a.t()) + Array2::<f64>::eye(2) * 0.1;
        let v = wmse(y.view(), pred.view(), sigma.view()).unwrap();
        prop_assert!(v >= 0.0);
        prop_assert_eq!(v == 0.0, exact);
    }
}

//! Acceptance suite: one PASS/FAIL line per criterion with the measured
//! value, then a nonzero exit when any criterion fails. The determinism
//! criterion drives the `experiment` command through the CLI entry point.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::ffi::OsStr;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::*;
use ndarray::{Array1, Array2};
use rand::Rng;

use wdro::datagen::{make_mlg_dataset, stream_rng, standard_normal_matrix, MlrGenerator, OutlierSpec};
use wdro::dro::{dro_objective, mlg_regularizer, mlr_regularizer, regularizer_subgradient};
use wdro::harness::{run_experiment, ExperimentConfig, ExperimentKind};
use wdro::losses::{mean_logloss, mlg_logloss, mlr_loss};
use wdro::metrics::{model_bound, mpd_coefficients};
use wdro::norms::{lrs_norm, lrs_subgradient};
use wdro::{fit_dro, Dataset, DroConfig, MethodKind, NormOrder, SolverConfig, Variant};

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(limit: Duration, started: Instant) -> (bool, String) {
    let took = started.elapsed();
    (took <= limit, format!("{:.1}s (limit {}s)", took.as_secs_f64(), limit.as_secs()))
}

fn norm_identities() -> Outcome {
    let started = Instant::now();
    let mut g = rng(101);
    let mut frob_err = 0.0f64;
    let mut rewrite_err = 0.0f64;
    for _ in 0..1000 {
        let (p, k) = (g.random_range(1..7), g.random_range(1..6));
        let b = uniform_matrix(&mut g, p, k, 3.0);
        let v = lrs_norm(b.view(), NormOrder::TWO, NormOrder::TWO).unwrap();
        frob_err = frob_err.max((v - frobenius(&b)).abs());
        for (r, s) in dual_pairs() {
            let (sr, one_s) = mlr_scalar_penalties(&b, r, s);
            let cfg = |variant| DroConfig::mlr(variant, 1.0).unwrap().with_r(r);
            rewrite_err = rewrite_err
                .max((mlr_regularizer(b.view(), &cfg(Variant::Sr)).unwrap() - sr).abs())
                .max((mlr_regularizer(b.view(), &cfg(Variant::OneS)).unwrap() - one_s).abs());
        }
    }
    let mut violations = 0;
    let mut cases = 0;
    for _ in 0..200 {
        let a = uniform_matrix(&mut g, 2, 3, 3.0);
        let b = uniform_matrix(&mut g, 3, 2, 3.0);
        let ab = a.dot(&b);
        for r in orders() {
            for s in orders() {
                let lhs = lrs_norm(ab.view(), r, s).unwrap();
                for (t, u) in dual_pairs() {
                    cases += 1;
                    let rhs = lrs_norm(a.view(), NormOrder::ONE, u).unwrap() * lrs_norm(b.view(), t, s).unwrap();
                    if lhs > rhs * (1.0 + 1e-12) + 1e-12 {
                        violations += 1;
                    }
                }
            }
        }
    }
    let (fast, took) = within(Duration::from_secs(5), started);
    check(
        frob_err <= 1e-12 && rewrite_err <= 1e-10 && violations == 0 && fast,
        format!(
            "max |L22 - F| = {frob_err:.2e}, max rewrite gap = {rewrite_err:.2e}, \
             sub-multiplicativity violations {violations}/{cases}, {took}"
        ),
    )
}

fn reductions() -> Outcome {
    let mut g = rng(102);
    let mut err = 0.0f64;
    for _ in 0..200 {
        let p = g.random_range(1..6);
        let beta = uniform_matrix(&mut g, p, 1, 3.0);
        let eps = g.random_range(0.01..2.0);
        let aug: Vec<f64> = beta.iter().map(|v| -v).chain([1.0]).collect();
        let mut two = Array2::zeros((p, 2));
        two.column_mut(0).assign(&beta.column(0));
        for (r, s) in dual_pairs() {
            let target = eps * lp(&aug, s);
            let beta_s = lp(&beta.column(0).to_vec(), s);
            let factor = 2f64.powf(s.reciprocal()) + 1.0;
            for variant in [Variant::Sr, Variant::OneS] {
                let mlr = mlr_regularizer(beta.view(), &DroConfig::mlr(variant, eps).unwrap().with_r(r)).unwrap();
                let mlg = mlg_regularizer(two.view(), &DroConfig::mlg(variant, eps).unwrap().with_r(r)).unwrap();
                err = err.max((mlr - target).abs()).max((mlg - eps * factor * beta_s).abs());
            }
        }
    }
    check(err <= 1e-12, format!("max reduction gap = {err:.2e}"))
}

fn gradients() -> Outcome {
    let mut g = rng(103);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let b = uniform_matrix(&mut g, 3, 2, 2.0);
        let x = Array1::from_shape_simple_fn(3, || g.random_range(-2.0..2.0));
        let y = Array1::from_shape_simple_fn(2, || g.random_range(-2.0..2.0));
        let grad = mlr_loss(b.view(), x.view(), y.view()).unwrap().gradient;
        let fd = fd_gradient(|m| mlr_loss(m.view(), x.view(), y.view()).unwrap().value, &b, 1e-6);
        worst = worst.max(rel_err(&grad, &fd, 1e-12));

        let b = uniform_matrix(&mut g, 4, 3, 2.0);
        let x = Array1::from_shape_simple_fn(4, || g.random_range(-2.0..2.0));
        let mut y = Array1::zeros(3);
        y[g.random_range(0..3)] = 1.0;
        let grad = mlg_logloss(b.view(), x.view(), y.view()).unwrap().gradient;
        let fd = fd_gradient(|m| mlg_logloss(m.view(), x.view(), y.view()).unwrap().value, &b, 1e-6);
        worst = worst.max(rel_err(&grad, &fd, 1e-12));

        let cfg = DroConfig::mlr(Variant::Sr, 0.8).unwrap();
        let b = uniform_matrix(&mut g, 4, 3, 2.0);
        let grad = regularizer_subgradient(b.view(), &cfg).unwrap();
        let fd = fd_gradient(|m| mlr_regularizer(m.view(), &cfg).unwrap(), &b, 1e-6);
        worst = worst.max(rel_err(&grad, &fd, 1e-12));
    }
    let mut violations = 0;
    let mut probes = 0;
    let all = orders();
    for i in 0..100 {
        let (r, s) = (all[i % all.len()], all[(i / all.len()) % all.len()]);
        let mut a = uniform_matrix(&mut g, 3, 3, 2.0);
        a.column_mut(0).fill(0.0);
        a[[2, 2]] = 0.0;
        let mut b = uniform_matrix(&mut g, 3, 2, 2.0);
        b.row_mut(1).fill(0.0);
        let one_s = DroConfig::mlr(Variant::OneS, 0.5).unwrap().with_r(r);
        let ga = lrs_subgradient(a.view(), r, s).unwrap();
        let gb = regularizer_subgradient(b.view(), &one_s).unwrap();
        let fa = lrs_norm(a.view(), r, s).unwrap();
        let fb = mlr_regularizer(b.view(), &one_s).unwrap();
        let da = uniform_matrix(&mut g, 3, 3, 1.0);
        let db = uniform_matrix(&mut g, 3, 2, 1.0);
        let h = 1e-3;
        probes += 2;
        if lrs_norm((&a + &(&da * h)).view(), r, s).unwrap() < fa + h * inner(&ga, &da) - 1e-9 {
            violations += 1;
        }
        if mlr_regularizer((&b + &(&db * h)).view(), &one_s).unwrap() < fb + h * inner(&gb, &db) - 1e-9 {
            violations += 1;
        }
    }
    check(
        worst <= 1e-5 && violations == 0,
        format!("max FD relative error = {worst:.2e}, kink violations {violations}/{probes}"),
    )
}

fn mpd_exactness() -> Outcome {
    let mut g = rng(104);
    let mut err = 0.0f64;
    let mut shift = 0.0f64;
    for _ in 0..50 {
        let (p, k, m) = (g.random_range(1..6), g.random_range(2..5), g.random_range(1..20));
        let b = uniform_matrix(&mut g, p, k, 2.0);
        let x = uniform_matrix(&mut g, m, p, 3.0);
        let mut oracle = f64::INFINITY;
        for row in x.rows() {
            let scores = row.dot(&b);
            let label = wdro::model::argmax(scores.view());
            for j in (0..k).filter(|&j| j != label) {
                let a: Array1<f64> = &b.column(j) - &b.column(label);
                oracle = oracle.min(halfspace_lp(&a, &row.to_owned()));
            }
        }
        let got = mpd_coefficients(b.view(), x.view()).unwrap();
        err = err.max((got - oracle).abs());
        let c = Array1::from_shape_simple_fn(p, || g.random_range(-5.0..5.0));
        let mut shifted = b.clone();
        for mut col in shifted.columns_mut() {
            col += &c;
        }
        shift = shift.max((mpd_coefficients(shifted.view(), x.view()).unwrap() - got).abs());
    }
    check(
        err <= 1e-6 && shift <= 1e-9,
        format!("max |MPD - LP| = {err:.2e}, max shift change = {shift:.2e}"),
    )
}

fn mlr_trend() -> Outcome {
    let started = Instant::now();
    let mut parts = Vec::new();
    let mut pass = true;
    for (kind, name) in [
        (ExperimentKind::MlrResponseOutliers, "response"),
        (ExperimentKind::MlrCovariateOutliers, "covariate"),
    ] {
        let cfg = ExperimentConfig {
            n_runs: 10,
            outlier_fractions: vec![0.3],
            ..ExperimentConfig::mlr(kind, 1)
        };
        let summary = run_experiment(&cfg).unwrap().summary();
        let robust = summary.mean(MethodKind::Mlr1s, 0.3, "wmse").unwrap();
        let ols = summary.mean(MethodKind::Ols, 0.3, "wmse").unwrap();
        let gain = 1.0 - robust / ols;
        pass &= gain >= 0.05;
        parts.push(format!("{name}: MLR-1S {robust:.4} vs OLS {ols:.4} ({:.1}% lower)", 100.0 * gain));
    }
    let (fast, took) = within(Duration::from_secs(300), started);
    check(pass && fast, format!("{}, need >= 5%; {took}", parts.join("; ")))
}

fn table_one() -> Outcome {
    let started = Instant::now();
    let summary = run_experiment(&ExperimentConfig::table1(1)).unwrap().summary();
    let mean = |m, metric| summary.mean(m, 0.2, metric).unwrap();
    let bands = [
        (MethodKind::MlgSr, 0.65, 0.81),
        (MethodKind::Mlg1s, 0.66, 0.78),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (m, ccr, ll) in bands {
        let (c, l) = (mean(m, "ccr"), mean(m, "logloss"));
        pass &= (c - ccr).abs() <= 0.08 && (l - ll).abs() <= 0.10;
        parts.push(format!("{m} CCR {c:.4} (band {ccr}±0.08) log-loss {l:.4} (band {ll}±0.10)"));
    }
    let baseline = [MethodKind::MlgVanilla, MethodKind::MlgRidge, MethodKind::MlgLasso, MethodKind::MlgPcc]
        .into_iter()
        .map(|m| mean(m, "mpd"))
        .fold(f64::NEG_INFINITY, f64::max);
    for m in [MethodKind::MlgSr, MethodKind::Mlg1s] {
        let ratio = mean(m, "mpd") / baseline;
        pass &= ratio >= 1.5;
        parts.push(format!("{m} MPD {:.4} = {ratio:.2}x best baseline {baseline:.4} (need 1.5x)", mean(m, "mpd")));
    }
    let (fast, took) = within(Duration::from_secs(600), started);
    check(pass && fast, format!("{}; {took}", parts.join("; ")))
}

fn bound_coverage() -> Outcome {
    let cfg = ExperimentConfig {
        n_runs: 200,
        outlier_fractions: vec![0.0],
        methods: vec![MethodKind::MlgSr],
        epsilon_grid: vec![0.01],
        ..ExperimentConfig::table1(7)
    };
    let report = run_experiment(&cfg).unwrap();
    let covered = report
        .rows
        .iter()
        .filter(|r| r.metric("bound").unwrap() > r.metric("logloss").unwrap())
        .count();
    let share = covered as f64 / report.rows.len() as f64;

    let mut err = 0.0f64;
    for seed in 0..20 {
        let train = make_mlg_dataset(5, 3, 100, &OutlierSpec::none(), seed).unwrap();
        let dro = DroConfig::mlg(Variant::Sr, 0.01).unwrap();
        let b = fit_dro(&train, &dro, &SolverConfig::default()).unwrap().coefficients;
        let got = model_bound(b.view(), &dro, &train, 0.1).unwrap();
        let loss = logloss_oracle(&b, train.x(), &train.labels());
        let c_bar = 3f64.sqrt() * lrs_oracle(&b, NormOrder::TWO, NormOrder::TWO)
            + lrs_oracle(&b, NormOrder::TWO, NormOrder::ONE);
        let r_x = train.x().rows().into_iter().map(|r| r.dot(&r).sqrt()).fold(0.0, f64::max);
        let a = r_x * c_bar + 3f64.ln();
        let oracle = loss + 2.0 * a / 10.0 + a * (8.0 * 20f64.ln() / 100.0).sqrt();
        err = err.max((got - oracle).abs());
    }
    check(
        share >= 0.85 && err <= 1e-10,
        format!("bound above test log-loss in {covered}/{} runs ({:.1}%), max formula gap {err:.2e}", report.rows.len(), 100.0 * share),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    let cfg = ExperimentConfig {
        n_runs: 4,
        outlier_fractions: vec![0.0, 0.2],
        epsilon_grid: vec![1e-2, 1e-1],
        lambda_grid: vec![1e-2, 1.0],
        solver: SolverConfig::default().with_max_iters(500),
        ..ExperimentConfig::table1(3)
    };
    std::fs::write(&config, serde_json::to_string(&cfg).unwrap()).unwrap();
    let run = |threads: &str, name: &str| {
        let out = dir.path().join(name);
        wdro_cli::run_from([
            OsStr::new("wdro"),
            OsStr::new("experiment"),
            OsStr::new("--config"),
            config.as_os_str(),
            OsStr::new("--out"),
            out.as_os_str(),
            OsStr::new("--threads"),
            OsStr::new(threads),
        ])
        .unwrap();
        std::fs::read(out.join("results.csv")).unwrap()
    };
    let a = run("1", "a");
    let b = run("4", "b");
    let c = run("4", "c");
    check(
        a == b && b == c && !a.is_empty(),
        format!("{} CSV bytes; 1 vs 4 threads identical: {}, repeat identical: {}", a.len(), a == b, b == c),
    )
}

fn degenerate_limits() -> Outcome {
    let mut rng = stream_rng(5, 0, "truth");
    let gen = MlrGenerator::new(5, 3, &mut rng).unwrap();
    let x = standard_normal_matrix(100, 5, &mut rng);
    let data = Dataset::regression(x.clone(), x.dot(gen.true_b())).unwrap();
    let solver = SolverConfig {
        max_iters: 200_000,
        window: 10_000,
        ..SolverConfig::default()
    };
    let tiny = fit_dro(&data, &DroConfig::mlr(Variant::OneS, 1e-9).unwrap(), &solver).unwrap();
    let recovery = frobenius(&(&tiny.coefficients - gen.true_b()));

    let mut shrink = 0.0f64;
    let noisy = make_mlg_dataset(5, 3, 100, &OutlierSpec::none(), 5).unwrap();
    for variant in [Variant::Sr, Variant::OneS] {
        let m = fit_dro(&data, &DroConfig::mlr(variant, 1e6).unwrap(), &SolverConfig::default()).unwrap();
        shrink = shrink.max(frobenius(&m.coefficients));
        let m = fit_dro(&noisy, &DroConfig::mlg(variant, 1e6).unwrap(), &SolverConfig::default()).unwrap();
        shrink = shrink.max(frobenius(&m.coefficients));
    }

    let mut at_zero = 0.0f64;
    for k in 2..6 {
        let d = make_mlg_dataset(5, k, 100, &OutlierSpec::none(), k as u64).unwrap();
        let zero = Array2::zeros((5, k));
        let (v, _) = mean_logloss(zero.view(), d.x().view(), d.y().view());
        let obj = dro_objective(zero.view(), &d, &DroConfig::mlg(Variant::Sr, 0.3).unwrap()).unwrap();
        at_zero = at_zero.max((v - (k as f64).ln()).abs()).max((obj - (k as f64).ln()).abs());
    }
    check(
        recovery <= 1e-3 && shrink <= 1e-3 && at_zero <= 1e-12,
        format!("recovery error {recovery:.2e}, max ||B|| at eps=1e6 {shrink:.2e}, |f(0) - log K| {at_zero:.2e}"),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("norm identities", norm_identities),
        ("penalty reductions", reductions),
        ("gradient correctness", gradients),
        ("MPD exactness", mpd_exactness),
        ("MLR robustness trend", mlr_trend),
        ("classification table replication", table_one),
        ("bound coverage", bound_coverage),
        ("determinism", determinism),
        ("degenerate limits", degenerate_limits),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let outcome = run();
        if !outcome.pass {
            failed += 1;
        }
        println!(
            "criterion {}: {} [{name}] {}",
            i + 1,
            if outcome.pass { "PASS" } else { "FAIL" },
            outcome.detail
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

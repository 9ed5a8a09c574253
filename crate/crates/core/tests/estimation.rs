#![allow(clippy::needless_range_loop)]

mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use ndarray::Array3;
use pericausal::causality::{analyze, AnalysisRequest, Direction, Measure};
use pericausal::estimation::{compute_lagged_moments, compute_reference_stats, fit_svar_ensemble};
use pericausal::linalg::schur_complement;
use pericausal::simulation::{simulate_svar, unidirectional_scenario, CoefficientSet, SvarSpec};
use pericausal::{ModelConfig, TimeSeriesEnsemble};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn random_ensemble(seed: u64, trials: usize, times: usize) -> TimeSeriesEnsemble {
    let mut rng = rng(seed);
    let data = Array3::from_shape_fn((trials, 2, times), |_| {
        let z: f64 = rng.sample(StandardNormal);
        z + if rng.random_bool(0.1) { 3.0 } else { 0.0 }
    });
    TimeSeriesEnsemble::new(data, 1.0).unwrap()
}

fn lag_row(ens: &TimeSeriesEnsemble, r: usize, t: usize, p: usize, channels: &[usize]) -> Vec<f64> {
    let mut row = Vec::new();
    for &ch in channels {
        for i in 0..p {
            row.push(ens.sample(r, ch, t - 1 - i));
        }
    }
    row
}

#[test]
fn fits_match_normal_equation_oracle() {
    for (seed, p) in [(1, 1), (2, 2), (3, 3)] {
        let ens = random_ensemble(seed, 40, 12);
        let model = fit_svar_ensemble(&ens, &ModelConfig::new(p)).unwrap();
        for fit in &model.fits {
            let t = fit.t;
            for k in 0..2 {
                let full_rows: Vec<Vec<f64>> = (0..40)
                    .map(|r| {
                        let mut row = vec![1.0];
                        row.extend(lag_row(&ens, r, t, p, &[k, 1 - k]));
                        row
                    })
                    .collect();
                let reduced_rows: Vec<Vec<f64>> = (0..40)
                    .map(|r| {
                        let mut row = vec![1.0];
                        row.extend(lag_row(&ens, r, t, p, &[k]));
                        row
                    })
                    .collect();
                let y: Vec<f64> = (0..40).map(|r| ens.sample(r, k, t)).collect();
                let (beta, rss) = oracle_ols(&full_rows, &y);
                let (_, rss_reduced) = oracle_ols(&reduced_rows, &y);
                let eq = &fit.equations[k];
                let dof = (40 - (2 * p + 1)) as f64;
                assert!((eq.intercept - beta[0]).abs() < 1e-9);
                for i in 0..p {
                    assert!((eq.own[i] - beta[1 + i]).abs() < 1e-9, "own t={t} k={k}");
                    assert!((eq.cross[i] - beta[1 + p + i]).abs() < 1e-9, "cross t={t} k={k}");
                }
                assert!((eq.residual_variance - rss / dof).abs() < 1e-9 * (1.0 + rss));
                assert!((eq.reduced_residual_variance - rss_reduced / dof).abs() < 1e-9 * (1.0 + rss_reduced));
                assert!(eq.residual_variance <= eq.reduced_residual_variance);
            }
        }
    }
}

#[test]
fn moments_match_plain_loops() {
    let ens = random_ensemble(8, 25, 9);
    let p = 2;
    let moments = compute_lagged_moments(&ens, p).unwrap();
    for m in &moments.times {
        let rows: Vec<Vec<f64>> = (0..25).map(|r| lag_row(&ens, r, m.t, p, &[0, 1])).collect();
        let (mean, cov) = oracle_moments(&rows);
        for i in 0..2 * p {
            assert!((m.mean[i] - mean[i]).abs() < 1e-12);
            for j in 0..2 * p {
                assert!((m.cov[(i, j)] - cov[i][j]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn reference_stats_pool_trials_and_times() {
    let data = random_ensemble(12, 15, 30).into_data();
    let ens = TimeSeriesEnsemble::peri_event(data, 1.0, 20).unwrap();
    let stats = compute_reference_stats(&ens, 4..12, 3, Direction::SecondToFirst).unwrap();
    let rows: Vec<Vec<f64>> = (4..12)
        .flat_map(|t| (0..15).map(move |r| (r, t)))
        .map(|(r, t)| lag_row(&ens, r, t, 3, &[1]))
        .collect();
    let (mean, cov) = oracle_moments(&rows);
    assert_eq!(stats.n_samples, rows.len());
    for i in 0..3 {
        assert!((stats.mean[i] - mean[i]).abs() < 1e-12);
        for j in 0..3 {
            assert!((stats.cov[(i, j)] - cov[i][j]).abs() < 1e-12);
        }
    }
}

#[test]
fn conditional_covariance_converges_to_schur_complement() {
    // Lag vectors at t = 2 with p = 2 are (x0[1], x0[0], x1[1], x1[0]).
    let sigma = DMatrix::from_row_slice(
        4,
        4,
        &[
            2.0, 0.6, 0.5, 0.2, //
            0.6, 1.5, 0.3, 0.4, //
            0.5, 0.3, 1.8, -0.5, //
            0.2, 0.4, -0.5, 1.2,
        ],
    );
    let root = sigma.clone().cholesky().unwrap().l();
    let n = 100_000;
    let mut rng = rng(31);
    let mut data = Array3::zeros((n, 2, 3));
    for r in 0..n {
        let z = DVector::from_fn(4, |_, _| rng.sample(StandardNormal));
        let x = &root * z;
        data[[r, 0, 1]] = x[0];
        data[[r, 0, 0]] = x[1];
        data[[r, 1, 1]] = x[2];
        data[[r, 1, 0]] = x[3];
    }
    let ens = TimeSeriesEnsemble::new(data, 1.0).unwrap();
    let m = compute_lagged_moments(&ens, 2).unwrap();
    let at = m.at(2).unwrap();
    let (exact_1, _) = schur_complement(&sigma, &[0, 1], &[2, 3]);
    let (exact_0, _) = schur_complement(&sigma, &[2, 3], &[0, 1]);
    for (est, exact) in [(&at.conditional[1], exact_1), (&at.conditional[0], exact_0)] {
        let rel = (est - &exact).norm() / exact.norm();
        assert!(rel < 0.02, "relative Frobenius error {rel}");
    }
}

#[test]
fn moments_are_affine_equivariant() {
    let ens = random_ensemble(5, 30, 8);
    let p = 2;
    let base = compute_lagged_moments(&ens, p).unwrap();
    let (shift, scale) = (4.5, -3.0);
    let mut data = ens.data().clone();
    for v in data.index_axis_mut(ndarray::Axis(1), 1) {
        *v = scale * *v + shift;
    }
    let moved = compute_lagged_moments(&TimeSeriesEnsemble::new(data, 1.0).unwrap(), p).unwrap();
    for (a, b) in base.times.iter().zip(&moved.times) {
        for i in 0..2 * p {
            let expected_mean = if i >= p { scale * a.mean[i] + shift } else { a.mean[i] };
            assert!((b.mean[i] - expected_mean).abs() < 1e-10);
            for j in 0..2 * p {
                let factor = match (i >= p, j >= p) {
                    (true, true) => scale * scale,
                    (false, false) => 1.0,
                    _ => scale,
                };
                assert!((b.cov[(i, j)] - factor * a.cov[(i, j)]).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn constant_spec_is_recovered() {
    let spec = unidirectional_scenario(0.5, 1, 6).unwrap();
    let ens = simulate_svar(&spec, 3000, 77).unwrap();
    let model = fit_svar_ensemble(&ens, &ModelConfig::new(1)).unwrap();
    let truth = &spec.coefficients[0];
    for fit in &model.fits {
        let e0 = &fit.equations[0];
        let e1 = &fit.equations[1];
        for (est, se, want) in [
            (e0.own[0], e0.own_se[0], truth.a[0]),
            (e0.cross[0], e0.cross_se[0], truth.b[0]),
            (e1.own[0], e1.own_se[0], truth.d[0]),
            (e1.cross[0], e1.cross_se[0], truth.c[0]),
            (e0.intercept, e0.intercept_se, 0.0),
        ] {
            assert!((est - want).abs() < 4.0 * se, "t={} est {est} want {want} se {se}", fit.t);
        }
        assert!((e0.residual_variance - 1.0).abs() < 0.12);
    }
}

#[test]
fn uncoupled_channels_are_uncorrelated() {
    let spec = SvarSpec::constant(
        CoefficientSet {
            a: vec![0.6],
            b: vec![0.0],
            c: vec![0.0],
            d: vec![-0.4],
        },
        [1.0, 2.0],
        40,
    )
    .unwrap();
    let ens = simulate_svar(&spec, 4000, 9).unwrap();
    let n = 4000.0;
    for lag in 0..3usize {
        for t in [10usize, 25, 39] {
            let xs: Vec<f64> = (0..4000).map(|r| ens.sample(r, 0, t)).collect();
            let ys: Vec<f64> = (0..4000).map(|r| ens.sample(r, 1, t - lag)).collect();
            let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
            let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
            let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
            let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
            let rho = sxy / (sxx * syy).sqrt();
            // 4.5 standard errors of a null correlation over 12 checks.
            assert!(rho.abs() < 4.5 / n.sqrt(), "lag {lag}, t {t}: {rho}");
        }
    }
}

fn all_measures(order: usize) -> AnalysisRequest {
    AnalysisRequest::new(ModelConfig::new(order), vec![Measure::Gc, Measure::Te, Measure::Dcs, Measure::Rdcs])
        .with_reference_window(order..order + 3)
}

fn peri(ens: TimeSeriesEnsemble, offset: usize) -> TimeSeriesEnsemble {
    TimeSeriesEnsemble::peri_event(ens.into_data(), 1.0, offset).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn measures_are_nonnegative_and_ordered(seed in any::<u64>(), trials in 12usize..60, order in 1usize..3) {
        let ens = peri(random_ensemble(seed, trials, 10), order + 3);
        let traces = analyze(&ens, &all_measures(order)).unwrap().traces;
        for tr in &traces {
            for v in &tr.values {
                prop_assert!(*v >= 0.0, "{:?} {:?} negative: {}", tr.measure, tr.direction, v);
            }
        }
        // traces: [GC x2, TE x2, DCS x2, rDCS x2]
        for d in 0..2 {
            for (te, dcs) in traces[2 + d].values.iter().zip(&traces[4 + d].values) {
                prop_assert!(*te <= *dcs + 1e-10, "TE {} > DCS {}", te, dcs);
            }
        }
    }

    #[test]
    fn measures_are_scale_invariant(seed in any::<u64>(), s0 in 0.01f64..100.0, s1 in 0.01f64..100.0) {
        let ens = random_ensemble(seed, 40, 8);
        let mut data = ens.data().clone();
        for ((_, ch, _), v) in data.indexed_iter_mut() {
            *v *= if ch == 0 { s0 } else { s1 };
        }
        let scaled = TimeSeriesEnsemble::new(data, 1.0).unwrap();
        let req = AnalysisRequest::new(ModelConfig::new(2), vec![Measure::Gc, Measure::Te, Measure::Dcs]);
        let a = analyze(&ens, &req).unwrap().traces;
        let b = analyze(&scaled, &req).unwrap().traces;
        for (ta, tb) in a.iter().zip(&b) {
            for (va, vb) in ta.values.iter().zip(&tb.values) {
                prop_assert!((va - vb).abs() < 1e-8, "{:?}: {} vs {}", ta.measure, va, vb);
            }
        }
    }
}

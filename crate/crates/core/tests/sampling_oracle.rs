mod common;

use common::*;
use proptest::prelude::*;
use subnewton::dataset::RowSet;
use subnewton::sampling::{draw_samples, IndexSet, SampleConfig, SampleSets, SubsampledOracle};
use subnewton::SoftmaxProblem;

fn config(fg: f64, fh: f64, seed: u64) -> SampleConfig {
    SampleConfig {
        gradient_fraction: fg,
        hessian_fraction: fh,
        with_replacement: false,
        seed,
    }
}

#[test]
fn unit_fraction_is_bit_identical() {
    let mut r = rng(21);
    let ds = random_dataset(&mut r, 700, 6, 4, 1.0);
    let x = uniform_vec(&mut r, 18, 1.0);
    let v = uniform_vec(&mut r, 18, 1.0);
    let prob = SoftmaxProblem::new(&ds, 1e-3).unwrap();
    let oracle = SubsampledOracle::draw(&prob, &config(1.0, 1.0, 3), 5).unwrap();
    assert_eq!(oracle.sub_gradient(&x), prob.gradient(&x));
    assert_eq!(oracle.sub_hess_vec(&x, &v), prob.hess_vec(&x, &v));
}

#[test]
fn singleton_sample_is_scaled_row_gradient() {
    let mut r = rng(22);
    let ds = random_dataset(&mut r, 30, 5, 3, 1.0);
    let x = uniform_vec(&mut r, 10, 1.0);
    let v = uniform_vec(&mut r, 10, 1.0);
    let lambda = 1e-3;
    let prob = SoftmaxProblem::new(&ds, lambda).unwrap();
    for i in [0, 17, 29] {
        let sets = SampleSets {
            gradient: IndexSet::Sample(vec![i]),
            hessian: IndexSet::Sample(vec![i]),
        };
        let oracle = SubsampledOracle::new(&prob, sets);
        let row = ds.select(&[i]);
        let expected_g: Vec<f64> = oracle_gradient(&row, &x, 0.0)
            .iter()
            .zip(&x)
            .map(|(g, xi)| 30.0 * g + lambda * xi)
            .collect();
        assert!(rel_err(&oracle.sub_gradient(&x), &expected_g) < 1e-13);
        let hv_row = dense_hessian(&row, &x, 0.0) * to_dvec(&v);
        let expected_hv: Vec<f64> = hv_row
            .iter()
            .zip(&v)
            .map(|(h, vi)| 30.0 * h + lambda * vi)
            .collect();
        assert!(rel_err(&oracle.sub_hess_vec(&x, &v), &expected_hv) < 1e-13);
    }
}

#[test]
fn zero_direction_gives_zero() {
    let mut r = rng(23);
    let ds = random_dataset(&mut r, 40, 3, 3, 1.0);
    let prob = SoftmaxProblem::new(&ds, 1e-3).unwrap();
    let oracle = SubsampledOracle::draw(&prob, &config(0.2, 0.05, 1), 0).unwrap();
    assert_eq!(
        oracle.sub_hess_vec(&uniform_vec(&mut r, 6, 1.0), &[0.0; 6]),
        vec![0.0; 6]
    );
}

fn monte_carlo_within_three_se(estimates: &[Vec<f64>], exact: &[f64]) {
    let k = estimates.len() as f64;
    for (j, &target) in exact.iter().enumerate() {
        let mean = estimates.iter().map(|e| e[j]).sum::<f64>() / k;
        let var = estimates.iter().map(|e| (e[j] - mean).powi(2)).sum::<f64>() / (k - 1.0);
        let se = (var / k).sqrt();
        assert!(
            (mean - target).abs() <= 3.0 * se,
            "component {j}: mean {mean}, exact {target}, se {se}"
        );
    }
}

#[test]
fn sampled_estimators_are_unbiased() {
    let mut r = rng(24);
    let ds = random_dataset(&mut r, 50, 4, 3, 1.0);
    let x = uniform_vec(&mut r, 8, 1.0);
    let v = uniform_vec(&mut r, 8, 1.0);
    let prob = SoftmaxProblem::new(&ds, 1e-3).unwrap();
    let cfg = config(0.1, 0.1, 99);
    let mut grads = Vec::new();
    let mut hvs = Vec::new();
    for it in 0..10_000 {
        let oracle = SubsampledOracle::draw(&prob, &cfg, it).unwrap();
        grads.push(oracle.sub_gradient(&x));
        hvs.push(oracle.sub_hess_vec(&x, &v));
    }
    monte_carlo_within_three_se(&grads, &prob.gradient(&x));
    monte_carlo_within_three_se(&hvs, &prob.hess_vec(&x, &v));
}

#[test]
fn scales_are_n_over_sample_size() {
    let mut r = rng(25);
    let ds = random_dataset(&mut r, 200, 2, 2, 1.0);
    let prob = SoftmaxProblem::new(&ds, 0.0).unwrap();
    let oracle = SubsampledOracle::draw(&prob, &config(0.2, 0.05, 0), 0).unwrap();
    assert_eq!(oracle.gradient_scale(), 5.0);
    assert_eq!(oracle.hessian_scale(), 20.0);
    assert_eq!(oracle.sets().hessian.rows().len(), 10);
    assert!(matches!(oracle.sets().gradient.rows(), RowSet::Subset(_)));
}

proptest! {
    #[test]
    fn samples_are_valid(
        n in 1usize..2000,
        fg in 0.001f64..=1.0,
        fh in 0.001f64..=1.0,
        seed in any::<u64>(),
        it in 0u64..1000,
        with_replacement in any::<bool>(),
    ) {
        let cfg = SampleConfig { gradient_fraction: fg, hessian_fraction: fh, with_replacement, seed };
        let sets = draw_samples(&cfg, n, it).unwrap();
        for (set, f) in [(&sets.gradient, fg), (&sets.hessian, fh)] {
            let idx = set.to_vec();
            let expected = ((f * n as f64).round() as usize).max(1);
            prop_assert_eq!(idx.len(), expected);
            prop_assert!(idx.iter().all(|&i| i < n));
            prop_assert!(idx.windows(2).all(|w| w[0] <= w[1]));
            if !with_replacement {
                prop_assert!(idx.windows(2).all(|w| w[0] < w[1]));
            }
        }
        prop_assert_eq!(sets, draw_samples(&cfg, n, it).unwrap());
    }

    #[test]
    fn sampled_hessian_keeps_lambda_floor(seed in any::<u64>(), fh in 0.01f64..=1.0) {
        let mut r = rng(seed);
        let ds = random_dataset(&mut r, 60, 4, 4, 3.0);
        let x = uniform_vec(&mut r, 12, 2.0);
        let v = uniform_vec(&mut r, 12, 1.0);
        let prob = SoftmaxProblem::new(&ds, 1e-3).unwrap();
        let oracle = SubsampledOracle::draw(&prob, &config(1.0, fh, seed), 0).unwrap();
        let hv = oracle.sub_hess_vec(&x, &v);
        let quad: f64 = hv.iter().zip(&v).map(|(a, b)| a * b).sum();
        prop_assert!(quad >= 1e-3 * norm(&v).powi(2) - 1e-10);
    }
}

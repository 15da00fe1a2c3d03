#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use subnewton::dataset::DesignMatrix;
use subnewton::LabeledDataset;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_vec(rng: &mut ChaCha8Rng, len: usize, scale: f64) -> Vec<f64> {
    (0..len).map(|_| scale * rng.gen_range(-1.0..1.0)).collect()
}

/// Dense uniform features in `[-scale, scale]`, labels uniform over `c` classes.
pub fn random_dataset(
    rng: &mut ChaCha8Rng,
    n: usize,
    p: usize,
    c: usize,
    scale: f64,
) -> LabeledDataset {
    let data = uniform_vec(rng, n * p, scale);
    let labels = (0..n).map(|_| rng.gen_range(0..c)).collect();
    LabeledDataset::new(DesignMatrix::dense(n, p, data).unwrap(), labels, c).unwrap()
}

pub fn dense_features(ds: &LabeledDataset) -> DMatrix<f64> {
    let (n, p) = (ds.n_rows(), ds.n_features());
    DMatrix::from_fn(n, p, |i, j| ds.features().get(i, j))
}

/// `Z = A X` with `X` the `p x (C-1)` matrix of weight blocks.
pub fn logits(ds: &LabeledDataset, x: &[f64]) -> DMatrix<f64> {
    let p = ds.n_features();
    let m = ds.n_classes() - 1;
    dense_features(ds) * DMatrix::from_column_slice(p, m, x)
}

/// Softmax probabilities of the `C - 1` free classes, via an explicit
/// shift by the row maximum over `{0, z_1, ..., z_{C-1}}`.
pub fn probabilities(z: &DMatrix<f64>) -> DMatrix<f64> {
    let mut h = z.clone();
    for i in 0..z.nrows() {
        let shift = z.row(i).iter().fold(0.0f64, |a, &b| a.max(b));
        let denom: f64 = (-shift).exp() + z.row(i).iter().map(|&v| (v - shift).exp()).sum::<f64>();
        for c in 0..z.ncols() {
            h[(i, c)] = (z[(i, c)] - shift).exp() / denom;
        }
    }
    h
}

pub fn oracle_objective(ds: &LabeledDataset, x: &[f64], lambda: f64) -> f64 {
    let z = logits(ds, x);
    let mut total = 0.0;
    for i in 0..z.nrows() {
        let shift = z.row(i).iter().fold(0.0f64, |a, &b| a.max(b));
        let lse = shift
            + ((-shift).exp() + z.row(i).iter().map(|&v| (v - shift).exp()).sum::<f64>()).ln();
        let b = ds.labels()[i];
        let linear = if b < z.ncols() { z[(i, b)] } else { 0.0 };
        total += lse - linear;
    }
    total + 0.5 * lambda * x.iter().map(|v| v * v).sum::<f64>()
}

/// Textbook formula `Σ log(1 + Σ exp z) - z_b` without any shift.
pub fn naive_objective(ds: &LabeledDataset, x: &[f64], lambda: f64) -> f64 {
    let z = logits(ds, x);
    let mut total = 0.0;
    for i in 0..z.nrows() {
        let s: f64 = 1.0 + z.row(i).iter().map(|v| v.exp()).sum::<f64>();
        let b = ds.labels()[i];
        let linear = if b < z.ncols() { z[(i, b)] } else { 0.0 };
        total += s.ln() - linear;
    }
    total + 0.5 * lambda * x.iter().map(|v| v * v).sum::<f64>()
}

/// `vec(A^T (H - Y)) + λ x`
pub fn oracle_gradient(ds: &LabeledDataset, x: &[f64], lambda: f64) -> Vec<f64> {
    let a = dense_features(ds);
    let mut r = probabilities(&logits(ds, x));
    for (i, &b) in ds.labels().iter().enumerate() {
        if b < r.ncols() {
            r[(i, b)] -= 1.0;
        }
    }
    let g = a.transpose() * r;
    g.as_slice()
        .iter()
        .zip(x)
        .map(|(gi, xi)| gi + lambda * xi)
        .collect()
}

/// Dense Hessian assembled block by block:
/// diagonal blocks `Σ h_c (1 - h_c) a aᵀ`, off-diagonal `-Σ h_c h_b a aᵀ`, plus `λ I`.
pub fn dense_hessian(ds: &LabeledDataset, x: &[f64], lambda: f64) -> DMatrix<f64> {
    let a = dense_features(ds);
    let h = probabilities(&logits(ds, x));
    let (n, p, m) = (a.nrows(), a.ncols(), h.ncols());
    let mut hess = DMatrix::<f64>::identity(p * m, p * m) * lambda;
    for i in 0..n {
        let ai = a.row(i).transpose();
        let outer = &ai * ai.transpose();
        for c in 0..m {
            for b in 0..m {
                let w = if b == c {
                    h[(i, c)] * (1.0 - h[(i, c)])
                } else {
                    -h[(i, c)] * h[(i, b)]
                };
                let mut block = hess.view_mut((c * p, b * p), (p, p));
                block += &outer * w;
            }
        }
    }
    hess
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(b).max(f64::MIN_POSITIVE)
}

pub fn to_dvec(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

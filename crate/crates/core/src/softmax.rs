//! ℓ2-regularized multinomial (softmax) cross-entropy.
//!
//! For `C` classes the model keeps `C - 1` weight blocks `x_c = w_c - w_C`;
//! class `C - 1` (0-based) is the reference class with an implicit zero
//! logit. The objective is
//!
//! ```text
//! F(x) = Σ_i [ log(1 + Σ_c exp<a_i, x_c>) - Σ_c 1(b_i = c) <a_i, x_c> ] + λ/2 ‖x‖²
//! ```
//!
//! Every exponential is taken relative to the row maximum
//! `M(a) = max(0, <a, x_1>, ..., <a, x_{C-1}>)`, so all exponents are ≤ 0 and
//! `1 + Σ_c exp<a, x_c> = exp(M) α(a)` with `α(a) = exp(-M) + Σ_c exp(<a, x_c> - M) ≥ 1`.
//!
//! Rows are processed in fixed contiguous blocks whose partial sums are
//! reduced in block order. The partition depends only on the number of rows,
//! so results are bit-identical for any worker count.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::ops::{Deref, DerefMut, Range};
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::cg::LinearOperator;
use crate::dataset::{LabeledDataset, Row, RowSet};
use crate::objective::FiniteSum;

const MIN_BLOCK_ROWS: usize = 256;
const MAX_BLOCKS: usize = 32;

#[derive(Debug, Error)]
pub enum SoftmaxError {
    #[error("weight vector has length {found}, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("regularization must be finite and non-negative, got {0}")]
    InvalidLambda(f64),
    #[error("metric is undefined on an empty dataset")]
    EmptyDataset,
    #[error("weight file {path}: {msg}")]
    WeightFile { path: String, msg: String },
}

/// Weights `x = [x_1; ...; x_{C-1}]`, block `c` occupying `data[c*p..(c+1)*p]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    data: Vec<f64>,
    n_features: usize,
    n_classes: usize,
}

impl WeightVector {
    pub fn zeros(n_features: usize, n_classes: usize) -> Self {
        assert!(n_classes >= 2, "need at least two classes");
        Self {
            data: vec![0.0; n_features * (n_classes - 1)],
            n_features,
            n_classes,
        }
    }

    pub fn from_vec(
        n_features: usize,
        n_classes: usize,
        data: Vec<f64>,
    ) -> Result<Self, SoftmaxError> {
        let expected = n_features * n_classes.saturating_sub(1);
        if n_classes < 2 || data.len() != expected {
            return Err(SoftmaxError::DimensionMismatch {
                expected,
                found: data.len(),
            });
        }
        Ok(Self {
            data,
            n_features,
            n_classes,
        })
    }

    pub fn for_problem(problem: &SoftmaxProblem<'_>) -> Self {
        Self::zeros(problem.n_features(), problem.n_classes())
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn block(&self, c: usize) -> &[f64] {
        &self.data[c * self.n_features..(c + 1) * self.n_features]
    }

    pub fn block_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.data[c * self.n_features..(c + 1) * self.n_features]
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Writes `p,C` on the first line and then one value per line in block order.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), SoftmaxError> {
        let path = path.as_ref();
        let err = |e: std::io::Error| SoftmaxError::WeightFile {
            path: path.display().to_string(),
            msg: e.to_string(),
        };
        let mut w = BufWriter::new(File::create(path).map_err(err)?);
        writeln!(w, "{},{}", self.n_features, self.n_classes).map_err(err)?;
        for v in &self.data {
            writeln!(w, "{v}").map_err(err)?;
        }
        w.flush().map_err(err)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SoftmaxError> {
        let path = path.as_ref();
        let fail = |msg: String| SoftmaxError::WeightFile {
            path: path.display().to_string(),
            msg,
        };
        let file = File::open(path).map_err(|e| fail(e.to_string()))?;
        let mut lines = BufReader::new(file).lines();
        let header = lines
            .next()
            .ok_or_else(|| fail("missing header".into()))?
            .map_err(|e| fail(e.to_string()))?;
        let (p, c) = header
            .split_once(',')
            .and_then(|(p, c)| Some((p.trim().parse().ok()?, c.trim().parse().ok()?)))
            .ok_or_else(|| fail(format!("bad header '{header}'")))?;
        let mut data = Vec::new();
        for (k, line) in lines.enumerate() {
            let line = line.map_err(|e| fail(e.to_string()))?;
            let v = line
                .trim()
                .parse()
                .map_err(|_| fail(format!("line {}: bad value '{line}'", k + 2)))?;
            data.push(v);
        }
        Self::from_vec(p, c, data)
    }
}

impl Deref for WeightVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.data
    }
}

impl DerefMut for WeightVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

/// Per-row log-sum-exp pieces.
#[derive(Debug, Clone, PartialEq)]
pub struct RowStats {
    /// `M(a_i)`, never negative.
    pub max_part: Vec<f64>,
    /// `Σ_c exp(<a_i, x_c> - M(a_i))`
    pub sum_exp_part: Vec<f64>,
    /// `<a_i, x_{b_i}>`, zero for the reference class.
    pub linear_part: Vec<f64>,
}

impl RowStats {
    pub fn len(&self) -> usize {
        self.max_part.len()
    }

    pub fn is_empty(&self) -> bool {
        self.max_part.is_empty()
    }

    /// `α(a_i) = exp(-M) + sumExp`
    pub fn normalizer(&self, i: usize) -> f64 {
        (-self.max_part[i]).exp() + self.sum_exp_part[i]
    }

    /// `log(exp(-M) + sumExp)`
    pub fn log_part(&self, i: usize) -> f64 {
        self.normalizer(i).ln()
    }
}

/// The regularized objective over one dataset.
#[derive(Clone, Copy)]
pub struct SoftmaxProblem<'a> {
    data: &'a LabeledDataset,
    lambda: f64,
}

impl fmt::Debug for SoftmaxProblem<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SoftmaxProblem")
            .field("n", &self.data.n_rows())
            .field("p", &self.data.n_features())
            .field("C", &self.data.n_classes())
            .field("lambda", &self.lambda)
            .finish()
    }
}

impl<'a> SoftmaxProblem<'a> {
    pub fn new(data: &'a LabeledDataset, lambda: f64) -> Result<Self, SoftmaxError> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(SoftmaxError::InvalidLambda(lambda));
        }
        Ok(Self { data, lambda })
    }

    pub fn data(&self) -> &'a LabeledDataset {
        self.data
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn n_rows(&self) -> usize {
        self.data.n_rows()
    }

    pub fn n_features(&self) -> usize {
        self.data.n_features()
    }

    pub fn n_classes(&self) -> usize {
        self.data.n_classes()
    }

    /// `d = (C - 1) p`
    pub fn dim(&self) -> usize {
        self.n_features() * (self.n_classes() - 1)
    }

    fn check_dim(&self, x: &[f64]) {
        assert_eq!(
            x.len(),
            self.dim(),
            "weight vector has length {}, expected (C-1)p = {}",
            x.len(),
            self.dim()
        );
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.check_dim(x);
        self.data_loss(RowSet::All(self.n_rows()), x) + 0.5 * self.lambda * norm_sq(x)
    }

    /// `Σ_{i ∈ rows} f_i(x)` without regularization.
    pub fn data_loss(&self, rows: RowSet<'_>, x: &[f64]) -> f64 {
        self.check_dim(x);
        let kernel = Kernel::new(self.data, x);
        let partials: Vec<f64> = block_ranges(rows.len())
            .into_par_iter()
            .map(|range| {
                let mut z = vec![0.0; kernel.m];
                let mut acc = 0.0;
                for k in range {
                    let i = rows.get(k);
                    kernel.logits(i, &mut z);
                    let (max_part, sum_exp) = max_and_sum_exp(&z);
                    let linear = kernel.linear_part(i, &z);
                    acc += max_part + ((-max_part).exp() + sum_exp).ln() - linear;
                }
                acc
            })
            .collect();
        partials.iter().sum()
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.gradient_on(RowSet::All(self.n_rows()), x)
    }

    /// `(n/|S|) Σ_{i∈S} ∇f_i(x) + λ x`
    pub fn gradient_on(&self, rows: RowSet<'_>, x: &[f64]) -> Vec<f64> {
        self.check_dim(x);
        let mut g = self.data_gradient(rows, x);
        scale_and_regularize(&mut g, sample_scale(self.n_rows(), rows), self.lambda, x);
        g
    }

    /// `Σ_{i∈rows} ∇f_i(x)` via `vec(A^T BInd)`, `BInd_ic = h(a_i, x_c) - 1(b_i = c)`.
    fn data_gradient(&self, rows: RowSet<'_>, x: &[f64]) -> Vec<f64> {
        let kernel = Kernel::new(self.data, x);
        let (p, m) = (kernel.p, kernel.m);
        let partials: Vec<Vec<f64>> = block_ranges(rows.len())
            .into_par_iter()
            .map(|range| {
                let mut acc = vec![0.0; p * m];
                let mut z = vec![0.0; m];
                for k in range {
                    let i = rows.get(k);
                    kernel.logits(i, &mut z);
                    softmax_in_place(&mut z);
                    if let Some(&b) = self.data.labels().get(i).filter(|&&b| b < m) {
                        z[b] -= 1.0;
                    }
                    scatter_row(self.data.features().row(i), &z, &mut acc);
                }
                acc
            })
            .collect();
        from_feature_major(&sum_blocks(partials, p * m), p, m)
    }

    pub fn hess_vec(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        let op = self.hessian_on(RowSet::All(self.n_rows()), x);
        let mut out = vec![0.0; v.len()];
        op.apply(v, &mut out);
        out
    }

    /// Hessian of the (sub-sampled) objective at `x`, with `h(a_i, x_c)`
    /// cached so each product costs two passes over the sampled rows.
    pub fn hessian_on<'s>(&'s self, rows: RowSet<'s>, x: &[f64]) -> HessianOperator<'s> {
        self.check_dim(x);
        let kernel = Kernel::new(self.data, x);
        let m = kernel.m;
        let blocks: Vec<Vec<f64>> = block_ranges(rows.len())
            .into_par_iter()
            .map(|range| {
                let mut h = vec![0.0; range.len() * m];
                for (k, row_h) in range.zip(h.chunks_mut(m)) {
                    kernel.logits(rows.get(k), row_h);
                    softmax_in_place(row_h);
                }
                h
            })
            .collect();
        HessianOperator {
            data: self.data,
            rows,
            scale: sample_scale(self.n_rows(), rows),
            lambda: self.lambda,
            h: blocks.concat(),
            p: kernel.p,
            m,
        }
    }

    /// Per-row stats over the whole dataset.
    pub fn row_stats(&self, x: &[f64]) -> RowStats {
        row_stats(self.data, RowSet::All(self.n_rows()), x)
    }
}

impl FiniteSum for SoftmaxProblem<'_> {
    fn dim(&self) -> usize {
        SoftmaxProblem::dim(self)
    }

    fn n_terms(&self) -> usize {
        self.n_rows()
    }

    fn lambda(&self) -> f64 {
        self.lambda
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.objective(x)
    }

    fn gradient_on(&self, rows: RowSet<'_>, x: &[f64]) -> Vec<f64> {
        SoftmaxProblem::gradient_on(self, rows, x)
    }

    fn hessian_on<'s>(&'s self, rows: RowSet<'s>, x: &[f64]) -> Box<dyn LinearOperator + 's> {
        Box::new(SoftmaxProblem::hessian_on(self, rows, x))
    }
}

/// `v ↦ (n/|S|) vec(A_S^T U) + λ v` with
/// `U = V⊙W - W⊙((V⊙W) e) e^T`, `V = A_S Q`, `W_ic = h(a_i, x_c)`.
pub struct HessianOperator<'a> {
    data: &'a LabeledDataset,
    rows: RowSet<'a>,
    scale: f64,
    lambda: f64,
    /// `|S| x (C-1)` row-major `h` values.
    h: Vec<f64>,
    p: usize,
    m: usize,
}

impl HessianOperator<'_> {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }
}

impl LinearOperator for HessianOperator<'_> {
    fn dim(&self) -> usize {
        self.p * self.m
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) {
        assert_eq!(v.len(), self.dim(), "hess_vec: vector length mismatch");
        assert_eq!(out.len(), self.dim(), "hess_vec: output length mismatch");
        let (p, m) = (self.p, self.m);
        let vt = to_feature_major(v, p, m);
        let features = self.data.features();
        let partials: Vec<Vec<f64>> = block_ranges(self.rows.len())
            .into_par_iter()
            .map(|range| {
                let mut acc = vec![0.0; p * m];
                let mut u = vec![0.0; m];
                for k in range {
                    let row = features.row(self.rows.get(k));
                    // u <- V_i, the row of A Q
                    project_row(row, &vt, m, &mut u);
                    let w = &self.h[k * m..(k + 1) * m];
                    let mut vw_sum = 0.0;
                    for (uc, &wc) in u.iter_mut().zip(w) {
                        *uc *= wc;
                        vw_sum += *uc;
                    }
                    for (uc, &wc) in u.iter_mut().zip(w) {
                        *uc -= wc * vw_sum;
                    }
                    scatter_row(row, &u, &mut acc);
                }
                acc
            })
            .collect();
        let hv = from_feature_major(&sum_blocks(partials, p * m), p, m);
        out.copy_from_slice(&hv);
        scale_and_regularize(out, self.scale, self.lambda, v);
    }
}

/// Row statistics restricted to `rows`.
pub fn row_stats(ds: &LabeledDataset, rows: RowSet<'_>, x: &[f64]) -> RowStats {
    let kernel = Kernel::new(ds, x);
    let mut stats = RowStats {
        max_part: Vec::with_capacity(rows.len()),
        sum_exp_part: Vec::with_capacity(rows.len()),
        linear_part: Vec::with_capacity(rows.len()),
    };
    let mut z = vec![0.0; kernel.m];
    for k in 0..rows.len() {
        let i = rows.get(k);
        kernel.logits(i, &mut z);
        let (max_part, sum_exp) = max_and_sum_exp(&z);
        stats.max_part.push(max_part);
        stats.sum_exp_part.push(sum_exp);
        stats.linear_part.push(kernel.linear_part(i, &z));
    }
    stats
}

/// Class probabilities, `n x C` row-major; the last column is the reference class.
pub fn class_probabilities(ds: &LabeledDataset, x: &[f64]) -> Vec<f64> {
    let kernel = Kernel::new(ds, x);
    let c_total = kernel.m + 1;
    let mut out = vec![0.0; ds.n_rows() * c_total];
    let mut z = vec![0.0; kernel.m];
    for (i, probs) in out.chunks_mut(c_total).enumerate() {
        kernel.logits(i, &mut z);
        let (max_part, _) = max_and_sum_exp(&z);
        let alpha = softmax_in_place(&mut z);
        probs[..kernel.m].copy_from_slice(&z);
        probs[kernel.m] = (-max_part).exp() / alpha;
    }
    out
}

/// Most probable class per row; ties go to the lowest class index.
pub fn predict(ds: &LabeledDataset, x: &[f64]) -> Vec<usize> {
    let c_total = ds.n_classes();
    class_probabilities(ds, x)
        .chunks(c_total)
        .map(|probs| {
            let mut best = 0;
            for (c, &pc) in probs.iter().enumerate().skip(1) {
                if pc > probs[best] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

pub fn accuracy(ds: &LabeledDataset, x: &[f64]) -> Result<f64, SoftmaxError> {
    if ds.is_empty() {
        return Err(SoftmaxError::EmptyDataset);
    }
    let correct = predict(ds, x)
        .iter()
        .zip(ds.labels())
        .filter(|(p, b)| p == b)
        .count();
    Ok(correct as f64 / ds.n_rows() as f64)
}

/// Shared per-row machinery: the weights are held feature-major
/// (`xt[j*m + c] = x_c[j]`) so one sparse row touches contiguous memory.
struct Kernel<'a> {
    data: &'a LabeledDataset,
    xt: Vec<f64>,
    p: usize,
    m: usize,
}

impl<'a> Kernel<'a> {
    fn new(data: &'a LabeledDataset, x: &[f64]) -> Self {
        let p = data.n_features();
        let m = data.n_classes() - 1;
        assert_eq!(
            x.len(),
            p * m,
            "weight vector has length {}, expected (C-1)p = {}",
            x.len(),
            p * m
        );
        Self {
            data,
            xt: to_feature_major(x, p, m),
            p,
            m,
        }
    }

    #[inline]
    fn logits(&self, i: usize, z: &mut [f64]) {
        project_row(self.data.features().row(i), &self.xt, self.m, z);
    }

    #[inline]
    fn linear_part(&self, i: usize, z: &[f64]) -> f64 {
        let b = self.data.labels()[i];
        if b < self.m {
            z[b]
        } else {
            0.0
        }
    }
}

/// `z_c = <a, q_c>` for feature-major `qt`.
#[inline]
fn project_row(row: Row<'_>, qt: &[f64], m: usize, z: &mut [f64]) {
    z.fill(0.0);
    row.for_each(|j, v| {
        let q = &qt[j * m..(j + 1) * m];
        for (zc, &qc) in z.iter_mut().zip(q) {
            *zc += v * qc;
        }
    });
}

/// `acc[j*m + c] += a_j coef_c`
#[inline]
fn scatter_row(row: Row<'_>, coef: &[f64], acc: &mut [f64]) {
    let m = coef.len();
    row.for_each(|j, v| {
        let dst = &mut acc[j * m..(j + 1) * m];
        for (d, &cc) in dst.iter_mut().zip(coef) {
            *d += v * cc;
        }
    });
}

/// `(M, Σ_c exp(z_c - M))` with `M = max(0, z)`.
#[inline]
fn max_and_sum_exp(z: &[f64]) -> (f64, f64) {
    let max_part = z.iter().copied().fold(0.0, f64::max);
    let sum_exp = z.iter().map(|&zc| (zc - max_part).exp()).sum();
    (max_part, sum_exp)
}

/// Replaces logits with `h_c = exp(z_c - M) / α` and returns `α`.
#[inline]
fn softmax_in_place(z: &mut [f64]) -> f64 {
    let max_part = z.iter().copied().fold(0.0, f64::max);
    let mut alpha = (-max_part).exp();
    for zc in z.iter_mut() {
        *zc = (*zc - max_part).exp();
        alpha += *zc;
    }
    for zc in z.iter_mut() {
        *zc /= alpha;
    }
    alpha
}

fn block_ranges(len: usize) -> Vec<Range<usize>> {
    let block = MIN_BLOCK_ROWS.max(len.div_ceil(MAX_BLOCKS));
    (0..len)
        .step_by(block)
        .map(|s| s..(s + block).min(len))
        .collect()
}

fn sum_blocks(partials: Vec<Vec<f64>>, len: usize) -> Vec<f64> {
    let mut it = partials.into_iter();
    let mut total = it.next().unwrap_or_else(|| vec![0.0; len]);
    for part in it {
        for (t, v) in total.iter_mut().zip(&part) {
            *t += v;
        }
    }
    total
}

fn sample_scale(n: usize, rows: RowSet<'_>) -> f64 {
    match rows {
        RowSet::All(_) => 1.0,
        RowSet::Subset([]) => 0.0,
        RowSet::Subset(s) => n as f64 / s.len() as f64,
    }
}

/// `out <- scale * out + λ v`; a unit scale is skipped so full-sample
/// estimates match the exact evaluations bit for bit.
fn scale_and_regularize(out: &mut [f64], scale: f64, lambda: f64, v: &[f64]) {
    if scale != 1.0 {
        out.iter_mut().for_each(|o| *o *= scale);
    }
    if lambda != 0.0 {
        for (o, &vi) in out.iter_mut().zip(v) {
            *o += lambda * vi;
        }
    }
}

fn to_feature_major(x: &[f64], p: usize, m: usize) -> Vec<f64> {
    let mut xt = vec![0.0; p * m];
    for c in 0..m {
        for j in 0..p {
            xt[j * m + c] = x[c * p + j];
        }
    }
    xt
}

fn from_feature_major(xt: &[f64], p: usize, m: usize) -> Vec<f64> {
    let mut x = vec![0.0; p * m];
    for j in 0..p {
        for c in 0..m {
            x[c * p + j] = xt[j * m + c];
        }
    }
    x
}

fn norm_sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

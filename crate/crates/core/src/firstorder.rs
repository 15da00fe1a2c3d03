//! Mini-batch first-order baselines: momentum SGD, Adagrad, Adadelta,
//! RMSProp and Adam.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use thiserror::Error;

use crate::dataset::{LabeledDataset, RowSet};
use crate::rng::{stream_rng, Purpose};
use crate::sampling::sample_size;
use crate::softmax::{accuracy, SoftmaxProblem};
use crate::trace::{RunRecord, SolveTrace, Stopwatch, TerminationReason};

#[derive(Debug, Error, PartialEq)]
pub enum FirstOrderError {
    #[error("unknown first-order method '{0}'")]
    UnknownMethod(String),
    #[error("invalid first-order configuration: {0}")]
    InvalidConfig(String),
    #[error("starting point has length {found}, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Momentum,
    Adagrad,
    Adadelta,
    Rmsprop,
    Adam,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Momentum,
        Method::Adagrad,
        Method::Adadelta,
        Method::Rmsprop,
        Method::Adam,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Momentum => "momentum",
            Method::Adagrad => "adagrad",
            Method::Adadelta => "adadelta",
            Method::Rmsprop => "rmsprop",
            Method::Adam => "adam",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = FirstOrderError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| FirstOrderError::UnknownMethod(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BatchSize {
    Count(usize),
    /// Fraction of the training rows, rounded, at least one.
    Fraction(f64),
}

impl BatchSize {
    pub fn resolve(self, n: usize) -> usize {
        match self {
            BatchSize::Count(b) => b.clamp(1, n.max(1)),
            BatchSize::Fraction(f) => sample_size(f, n),
        }
    }
}

impl FromStr for BatchSize {
    type Err = FirstOrderError;

    /// `128` is a row count, `0.2` a fraction.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || FirstOrderError::InvalidConfig(format!("bad batch size '{s}'"));
        if let Ok(b) = s.parse::<usize>() {
            return if b >= 1 {
                Ok(BatchSize::Count(b))
            } else {
                Err(bad())
            };
        }
        match s.parse::<f64>() {
            Ok(f) if f > 0.0 && f <= 1.0 => Ok(BatchSize::Fraction(f)),
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for BatchSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BatchSize::Count(b) => write!(f, "{b}"),
            BatchSize::Fraction(x) => write!(f, "{x}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperParams {
    pub momentum: f64,
    pub adagrad_eps: f64,
    pub adagrad_init: f64,
    pub adadelta_rho: f64,
    pub adadelta_eps: f64,
    pub rmsprop_decay: f64,
    pub rmsprop_eps: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            momentum: 0.9,
            adagrad_eps: 1e-10,
            adagrad_init: 0.1,
            adadelta_rho: 0.95,
            adadelta_eps: 1e-8,
            rmsprop_decay: 0.9,
            rmsprop_eps: 1e-10,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FirstOrderConfig {
    pub method: Method,
    pub learning_rate: f64,
    pub batch_size: BatchSize,
    pub epochs: usize,
    pub hyper: HyperParams,
    pub seed: u64,
    /// Stop once the objective exceeds this multiple of the initial one.
    pub divergence_factor: f64,
    /// Optional cap on optimization seconds, checked after every batch.
    pub time_budget: Option<f64>,
}

impl FirstOrderConfig {
    pub fn new(method: Method, learning_rate: f64) -> Self {
        Self {
            method,
            learning_rate,
            batch_size: BatchSize::Count(128),
            epochs: 100,
            hyper: HyperParams::default(),
            seed: 0,
            divergence_factor: 1e3,
            time_budget: None,
        }
    }

    pub fn validate(&self) -> Result<(), FirstOrderError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(FirstOrderError::InvalidConfig(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        match self.batch_size {
            BatchSize::Count(0) => Err(FirstOrderError::InvalidConfig("batch size 0".into())),
            BatchSize::Fraction(f) if !(f > 0.0 && f <= 1.0) => Err(
                FirstOrderError::InvalidConfig(format!("batch fraction {f} outside (0, 1]")),
            ),
            _ => Ok(()),
        }
    }
}

/// Per-method accumulators, each of length `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    method: Method,
    /// velocity, squared-gradient accumulator, or first moment
    first: Vec<f64>,
    /// Adadelta squared-update accumulator or Adam second moment
    second: Vec<f64>,
    steps: u64,
}

impl OptimizerState {
    pub fn new(method: Method, dim: usize, hyper: &HyperParams) -> Self {
        let first_init = if method == Method::Adagrad {
            hyper.adagrad_init
        } else {
            0.0
        };
        let second_len = match method {
            Method::Adadelta | Method::Adam => dim,
            _ => 0,
        };
        Self {
            method,
            first: vec![first_init; dim],
            second: vec![0.0; second_len],
            steps: 0,
        }
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn first(&self) -> &[f64] {
        &self.first
    }

    pub fn second(&self) -> &[f64] {
        &self.second
    }

    /// Applies one update of `x` with gradient `g` and step `lr`.
    pub fn step(&mut self, x: &mut [f64], g: &[f64], lr: f64, hp: &HyperParams) {
        assert_eq!(x.len(), self.first.len(), "state/weight length mismatch");
        assert_eq!(g.len(), x.len(), "gradient/weight length mismatch");
        self.steps += 1;
        match self.method {
            Method::Momentum => {
                for ((xi, vi), &gi) in x.iter_mut().zip(&mut self.first).zip(g) {
                    *vi = hp.momentum * *vi - lr * gi;
                    *xi += *vi;
                }
            }
            Method::Adagrad => {
                for ((xi, ai), &gi) in x.iter_mut().zip(&mut self.first).zip(g) {
                    *ai += gi * gi;
                    *xi -= lr * gi / (*ai + hp.adagrad_eps).sqrt();
                }
            }
            Method::Rmsprop => {
                let rho = hp.rmsprop_decay;
                for ((xi, ai), &gi) in x.iter_mut().zip(&mut self.first).zip(g) {
                    *ai = rho * *ai + (1.0 - rho) * gi * gi;
                    *xi -= lr * gi / (*ai + hp.rmsprop_eps).sqrt();
                }
            }
            Method::Adadelta => {
                let (rho, eps) = (hp.adadelta_rho, hp.adadelta_eps);
                for (((xi, ag), ad), &gi) in x
                    .iter_mut()
                    .zip(&mut self.first)
                    .zip(&mut self.second)
                    .zip(g)
                {
                    *ag = rho * *ag + (1.0 - rho) * gi * gi;
                    let update = ((*ad + eps).sqrt() / (*ag + eps).sqrt()) * gi;
                    *ad = rho * *ad + (1.0 - rho) * update * update;
                    *xi -= lr * update;
                }
            }
            Method::Adam => {
                let (b1, b2) = (hp.adam_beta1, hp.adam_beta2);
                let t = self.steps as i32;
                let c1 = 1.0 - b1.powi(t);
                let c2 = 1.0 - b2.powi(t);
                for (((xi, m), v), &gi) in x
                    .iter_mut()
                    .zip(&mut self.first)
                    .zip(&mut self.second)
                    .zip(g)
                {
                    *m = b1 * *m + (1.0 - b1) * gi;
                    *v = b2 * *v + (1.0 - b2) * gi * gi;
                    let m_hat = *m / c1;
                    let v_hat = *v / c2;
                    *xi -= lr * m_hat / (v_hat.sqrt() + hp.adam_eps);
                }
            }
        }
    }
}

/// `{10^k / L : k = -6, ..., 6}`
pub fn lr_grid(lipschitz: f64) -> Vec<f64> {
    assert!(lipschitz > 0.0, "Lipschitz estimate must be positive");
    (-6..=6).map(|k| 10f64.powi(k) / lipschitz).collect()
}

/// Mini-batches of one epoch: a seeded permutation of `0..n` cut into chunks
/// of `batch` (the last may be shorter), each sorted ascending.
pub fn epoch_batches(n: usize, batch: usize, seed: u64, epoch: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream_rng(seed, Purpose::Shuffle, epoch));
    order
        .chunks(batch.max(1))
        .map(|chunk| {
            let mut idx = chunk.to_vec();
            idx.sort_unstable();
            idx
        })
        .collect()
}

/// Runs `cfg.epochs` shuffled sweeps of mini-batch updates. Batch gradients
/// are `(n/|B|) Σ_{i∈B} ∇f_i + λ x`, the same estimator the Newton variants
/// use. One record per epoch; evaluation time is excluded from the clock.
pub fn run_epochs(
    prob: &SoftmaxProblem<'_>,
    cfg: &FirstOrderConfig,
    x0: &[f64],
    test_set: Option<&LabeledDataset>,
    solver: &str,
) -> Result<SolveTrace, FirstOrderError> {
    cfg.validate()?;
    if x0.len() != prob.dim() {
        return Err(FirstOrderError::DimensionMismatch {
            expected: prob.dim(),
            found: x0.len(),
        });
    }
    let n = prob.n_rows();
    let batch = cfg.batch_size.resolve(n);
    let record = |iter: usize, seconds: f64, objective: f64, x: &[f64]| RunRecord {
        solver: solver.to_string(),
        iter,
        cum_seconds: seconds,
        objective,
        train_acc: accuracy(prob.data(), x).unwrap_or(f64::NAN),
        test_acc: test_set.and_then(|t| accuracy(t, x).ok()),
        step_size: cfg.learning_rate,
        cg_iters: 0,
    };

    let mut clock = Stopwatch::default();
    let mut x = x0.to_vec();
    let f0 = prob.objective(&x);
    let mut records = vec![record(0, 0.0, f0, &x)];
    let mut state = OptimizerState::new(cfg.method, x.len(), &cfg.hyper);
    let mut termination = TerminationReason::MaxIterations;

    for epoch in 0..cfg.epochs {
        clock.resume();
        let mut out_of_time = false;
        for idx in epoch_batches(n, batch, cfg.seed, epoch as u64) {
            let g = prob.gradient_on(RowSet::Subset(&idx), &x);
            state.step(&mut x, &g, cfg.learning_rate, &cfg.hyper);
            if cfg.time_budget.is_some_and(|b| clock.seconds() >= b) {
                out_of_time = true;
                break;
            }
        }
        clock.pause();
        let f = prob.objective(&x);
        records.push(record(epoch + 1, clock.seconds(), f, &x));
        if !f.is_finite() || f > cfg.divergence_factor * f0 {
            termination = TerminationReason::Diverged;
            break;
        }
        if out_of_time {
            termination = TerminationReason::TimeBudget;
            break;
        }
    }
    Ok(SolveTrace {
        solver: solver.to_string(),
        records,
        x,
        termination,
        message: None,
    })
}

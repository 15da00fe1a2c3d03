//! Uniform index sampling for the sub-sampled gradient and Hessian.

use rand::seq::index;
use rand::Rng;
use thiserror::Error;

use crate::cg::LinearOperator;
use crate::dataset::RowSet;
use crate::objective::FiniteSum;
use crate::rng::{stream_rng, Purpose};

#[derive(Debug, Error, PartialEq)]
pub enum SamplingError {
    #[error("sample fraction must lie in (0, 1], got {0}")]
    InvalidFraction(f64),
    #[error("cannot sample from an empty index range")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleConfig {
    pub gradient_fraction: f64,
    pub hessian_fraction: f64,
    pub with_replacement: bool,
    pub seed: u64,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            gradient_fraction: 1.0,
            hessian_fraction: 1.0,
            with_replacement: false,
            seed: 0,
        }
    }
}

impl SampleConfig {
    pub fn validate(&self) -> Result<(), SamplingError> {
        for f in [self.gradient_fraction, self.hessian_fraction] {
            if !(f > 0.0 && f <= 1.0) {
                return Err(SamplingError::InvalidFraction(f));
            }
        }
        Ok(())
    }
}

/// `max(1, round(f n))`
pub fn sample_size(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64).round() as usize).clamp(1, n.max(1))
}

/// A set of row indices: every row in order, or a sorted sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IndexSet {
    Full(usize),
    Sample(Vec<usize>),
}

impl IndexSet {
    pub fn len(&self) -> usize {
        match self {
            IndexSet::Full(n) => *n,
            IndexSet::Sample(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn rows(&self) -> RowSet<'_> {
        match self {
            IndexSet::Full(n) => RowSet::All(*n),
            IndexSet::Sample(s) => RowSet::Subset(s),
        }
    }

    pub fn to_vec(&self) -> Vec<usize> {
        match self {
            IndexSet::Full(n) => (0..*n).collect(),
            IndexSet::Sample(s) => s.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleSets {
    pub gradient: IndexSet,
    pub hessian: IndexSet,
}

/// Draws `S_g` and `S_H` for outer iteration `iteration`. Each set comes from
/// its own stream, so the pair depends only on `(seed, iteration)`.
pub fn draw_samples(
    cfg: &SampleConfig,
    n: usize,
    iteration: u64,
) -> Result<SampleSets, SamplingError> {
    cfg.validate()?;
    if n == 0 {
        return Err(SamplingError::Empty);
    }
    Ok(SampleSets {
        gradient: draw_one(
            cfg,
            cfg.gradient_fraction,
            n,
            Purpose::GradientSample,
            iteration,
        ),
        hessian: draw_one(
            cfg,
            cfg.hessian_fraction,
            n,
            Purpose::HessianSample,
            iteration,
        ),
    })
}

fn draw_one(
    cfg: &SampleConfig,
    fraction: f64,
    n: usize,
    purpose: Purpose,
    iteration: u64,
) -> IndexSet {
    if fraction == 1.0 {
        return IndexSet::Full(n);
    }
    let k = sample_size(fraction, n);
    let mut rng = stream_rng(cfg.seed, purpose, iteration);
    let mut picked = if cfg.with_replacement {
        (0..k).map(|_| rng.gen_range(0..n)).collect()
    } else {
        index::sample(&mut rng, n, k).into_vec()
    };
    picked.sort_unstable();
    IndexSet::Sample(picked)
}

/// Sub-sampled gradient and Hessian of a finite sum at fixed index sets.
pub struct SubsampledOracle<'a, P: ?Sized> {
    problem: &'a P,
    sets: SampleSets,
}

impl<'a, P: FiniteSum + ?Sized> SubsampledOracle<'a, P> {
    pub fn new(problem: &'a P, sets: SampleSets) -> Self {
        let n = problem.n_terms();
        for set in [&sets.gradient, &sets.hessian] {
            match set {
                IndexSet::Full(m) => assert_eq!(*m, n, "full index set of wrong size"),
                IndexSet::Sample(s) => {
                    assert!(!s.is_empty(), "empty sample");
                    assert!(s.iter().all(|&i| i < n), "sample index out of range");
                }
            }
        }
        Self { problem, sets }
    }

    pub fn draw(problem: &'a P, cfg: &SampleConfig, iteration: u64) -> Result<Self, SamplingError> {
        let sets = draw_samples(cfg, problem.n_terms(), iteration)?;
        Ok(Self::new(problem, sets))
    }

    pub fn sets(&self) -> &SampleSets {
        &self.sets
    }

    /// `n / |S_g|`
    pub fn gradient_scale(&self) -> f64 {
        self.problem.n_terms() as f64 / self.sets.gradient.len() as f64
    }

    /// `n / |S_H|`
    pub fn hessian_scale(&self) -> f64 {
        self.problem.n_terms() as f64 / self.sets.hessian.len() as f64
    }

    pub fn sub_gradient(&self, x: &[f64]) -> Vec<f64> {
        self.problem.gradient_on(self.sets.gradient.rows(), x)
    }

    pub fn sub_hessian(&self, x: &[f64]) -> Box<dyn LinearOperator + '_> {
        self.problem.hessian_on(self.sets.hessian.rows(), x)
    }

    pub fn sub_hess_vec(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        self.sub_hessian(x).apply(v, &mut out);
        out
    }
}

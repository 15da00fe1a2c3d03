//! Inexact (sub-sampled) Newton-CG with Armijo back-tracking.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::cg::{cg_solve, CgConfig};
use crate::dataset::LabeledDataset;
use crate::linesearch::{line_search, LineSearchConfig};
use crate::objective::{dot, norm, FiniteSum};
use crate::sampling::{SampleConfig, SubsampledOracle};
use crate::softmax::{accuracy, SoftmaxProblem};
use crate::trace::{RunRecord, SolveTrace, Stopwatch, TerminationReason};

#[derive(Debug, Error)]
pub enum NewtonError {
    #[error("unknown Newton variant '{0}'")]
    UnknownVariant(String),
    #[error("invalid Newton configuration: {0}")]
    InvalidConfig(String),
    #[error("starting point has length {found}, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("objective is not finite at the starting point")]
    NonFiniteStart,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonConfig {
    /// Stop once the (sampled) gradient norm drops below this.
    pub epsilon: f64,
    pub max_outer_iters: usize,
    pub cg: CgConfig,
    pub ls: LineSearchConfig,
    pub samples: SampleConfig,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-8,
            max_outer_iters: 100,
            cg: CgConfig::default(),
            ls: LineSearchConfig::default(),
            samples: SampleConfig::default(),
        }
    }
}

impl NewtonConfig {
    pub fn validate(&self) -> Result<(), NewtonError> {
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(NewtonError::InvalidConfig(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        let wrap = |e: &dyn fmt::Display| NewtonError::InvalidConfig(e.to_string());
        self.cg.validate().map_err(|e| wrap(&e))?;
        self.ls.validate().map_err(|e| wrap(&e))?;
        self.samples.validate().map_err(|e| wrap(&e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Full,
    Subsampled100,
    Subsampled20,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Full, Variant::Subsampled100, Variant::Subsampled20];

    /// `(gradient fraction, Hessian fraction)`
    pub fn fractions(self) -> (f64, f64) {
        match self {
            Variant::Full => (1.0, 1.0),
            Variant::Subsampled100 => (1.0, 0.05),
            Variant::Subsampled20 => (0.2, 0.05),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::Subsampled100 => "subsampled-100",
            Variant::Subsampled20 => "subsampled-20",
        }
    }

    pub fn cli_name(self) -> &'static str {
        match self {
            Variant::Full => "full-newton",
            Variant::Subsampled100 => "subnewton-100",
            Variant::Subsampled20 => "subnewton-20",
        }
    }

    pub fn configure(self, base: NewtonConfig) -> NewtonConfig {
        let (fg, fh) = self.fractions();
        NewtonConfig {
            samples: SampleConfig {
                gradient_fraction: fg,
                hessian_fraction: fh,
                ..base.samples
            },
            ..base
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.cli_name())
    }
}

impl FromStr for Variant {
    type Err = NewtonError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s || v.cli_name() == s)
            .ok_or_else(|| NewtonError::UnknownVariant(s.to_string()))
    }
}

pub fn make_variant(name: &str, base: NewtonConfig) -> Result<NewtonConfig, NewtonError> {
    Ok(name.parse::<Variant>()?.configure(base))
}

/// State handed to the monitor after every accepted step (and once at the start).
#[derive(Debug, Clone, Copy)]
pub struct Progress<'a> {
    pub iter: usize,
    pub x: &'a [f64],
    pub objective: f64,
    /// Norm of the sampled gradient used for the step; NaN at the start.
    pub grad_norm: f64,
    pub step_size: f64,
    pub cg_iters: usize,
    pub cg_converged: bool,
    /// Optimization time so far, monitor time excluded.
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct NewtonOutcome {
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub termination: TerminationReason,
    pub message: Option<String>,
}

/// Runs the outer loop from `x0`. Samples for iteration `k` come from stream
/// `k` of the configured seed; the monitor's own running time is not counted.
pub fn minimize<P: FiniteSum + ?Sized>(
    problem: &P,
    cfg: &NewtonConfig,
    x0: Vec<f64>,
    mut monitor: impl FnMut(&Progress<'_>),
) -> Result<NewtonOutcome, NewtonError> {
    cfg.validate()?;
    if x0.len() != problem.dim() {
        return Err(NewtonError::DimensionMismatch {
            expected: problem.dim(),
            found: x0.len(),
        });
    }
    let mut clock = Stopwatch::started();
    let mut x = x0;
    let mut f = problem.value(&x);
    if !f.is_finite() {
        return Err(NewtonError::NonFiniteStart);
    }
    clock.pause();
    monitor(&Progress {
        iter: 0,
        x: &x,
        objective: f,
        grad_norm: f64::NAN,
        step_size: 0.0,
        cg_iters: 0,
        cg_converged: true,
        seconds: clock.seconds(),
    });

    let mut termination = TerminationReason::MaxIterations;
    let mut message = None;
    let mut iterations = 0;
    let mut trial = vec![0.0; x.len()];
    for k in 0..cfg.max_outer_iters {
        clock.resume();
        let oracle = match SubsampledOracle::draw(problem, &cfg.samples, k as u64) {
            Ok(o) => o,
            Err(e) => return Err(NewtonError::InvalidConfig(e.to_string())),
        };
        let g = oracle.sub_gradient(&x);
        let grad_norm = norm(&g);
        if grad_norm < cfg.epsilon {
            termination = TerminationReason::GradientConverged;
            break;
        }
        let report = {
            let hessian = oracle.sub_hessian(&x);
            cg_solve(&*hessian, &g, &cfg.cg)
        };
        let report = match report {
            Ok(r) => r,
            Err(e) => {
                termination = TerminationReason::CgFailure;
                message = Some(e.to_string());
                break;
            }
        };
        let p = report.solution;
        let slope = dot(&p, &g);
        let step = line_search(
            |alpha| {
                for ((t, xi), pi) in trial.iter_mut().zip(&x).zip(&p) {
                    *t = xi + alpha * pi;
                }
                problem.value(&trial)
            },
            f,
            slope,
            &cfg.ls,
        );
        let step = match step {
            Ok(s) => s,
            Err(e) => {
                termination = TerminationReason::LineSearchFailure;
                message = Some(e.to_string());
                break;
            }
        };
        for (xi, pi) in x.iter_mut().zip(&p) {
            *xi += step.alpha * pi;
        }
        f = step.value;
        iterations = k + 1;
        clock.pause();
        monitor(&Progress {
            iter: iterations,
            x: &x,
            objective: f,
            grad_norm,
            step_size: step.alpha,
            cg_iters: report.iterations,
            cg_converged: report.converged,
            seconds: clock.seconds(),
        });
    }
    Ok(NewtonOutcome {
        x,
        objective: f,
        iterations,
        termination,
        message,
    })
}

/// Newton-CG on a softmax problem, recording full-data objective and
/// accuracies after every step.
pub fn newton_solve(
    prob: &SoftmaxProblem<'_>,
    cfg: &NewtonConfig,
    x0: &[f64],
    test_set: Option<&LabeledDataset>,
    solver: &str,
) -> Result<SolveTrace, NewtonError> {
    let mut records = Vec::new();
    let outcome = minimize(prob, cfg, x0.to_vec(), |p| {
        records.push(RunRecord {
            solver: solver.to_string(),
            iter: p.iter,
            cum_seconds: p.seconds,
            objective: p.objective,
            train_acc: accuracy(prob.data(), p.x).unwrap_or(f64::NAN),
            test_acc: test_set.and_then(|t| accuracy(t, p.x).ok()),
            step_size: p.step_size,
            cg_iters: p.cg_iters,
        });
    })?;
    Ok(SolveTrace {
        solver: solver.to_string(),
        records,
        x: outcome.x,
        termination: outcome.termination,
        message: outcome.message,
    })
}

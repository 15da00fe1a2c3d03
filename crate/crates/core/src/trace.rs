//! Per-iteration run records and their CSV form.

use std::fmt;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::time::{Duration, Instant};

pub const TRACE_HEADER: [&str; 8] = [
    "solver",
    "iter",
    "cum_seconds",
    "objective",
    "train_acc",
    "test_acc",
    "step_size",
    "cg_iters",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub solver: String,
    /// Outer iteration or epoch; 0 is the starting point.
    pub iter: usize,
    pub cum_seconds: f64,
    /// Full training objective.
    pub objective: f64,
    pub train_acc: f64,
    pub test_acc: Option<f64>,
    pub step_size: f64,
    /// Inner CG iterations, 0 for first-order methods.
    pub cg_iters: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TerminationReason {
    GradientConverged,
    MaxIterations,
    LineSearchFailure,
    CgFailure,
    Diverged,
    TimeBudget,
}

impl TerminationReason {
    pub fn as_str(self) -> &'static str {
        match self {
            TerminationReason::GradientConverged => "gradient-converged",
            TerminationReason::MaxIterations => "max-iters",
            TerminationReason::LineSearchFailure => "line-search-failure",
            TerminationReason::CgFailure => "cg-failure",
            TerminationReason::Diverged => "diverged",
            TerminationReason::TimeBudget => "time-budget",
        }
    }
}

impl fmt::Display for TerminationReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveTrace {
    pub solver: String,
    pub records: Vec<RunRecord>,
    pub x: Vec<f64>,
    pub termination: TerminationReason,
    /// Diagnostic attached to abnormal terminations.
    pub message: Option<String>,
}

impl SolveTrace {
    pub fn final_objective(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.objective)
    }

    pub fn initial_objective(&self) -> f64 {
        self.records.first().map_or(f64::NAN, |r| r.objective)
    }

    pub fn best_test_accuracy(&self) -> Option<f64> {
        self.records
            .iter()
            .filter_map(|r| r.test_acc)
            .fold(None, |best, a| Some(best.map_or(a, |b: f64| b.max(a))))
    }

    /// First cumulative time at which the test accuracy reaches `target`.
    pub fn time_to_accuracy(&self, target: f64) -> Option<f64> {
        self.records
            .iter()
            .find(|r| r.test_acc.is_some_and(|a| a >= target))
            .map(|r| r.cum_seconds)
    }

    pub fn diverged(&self) -> bool {
        self.termination == TerminationReason::Diverged
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> io::Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        write_records(&mut w, &self.records)?;
        w.flush()
    }
}

/// Fixed-width scientific notation, 16 significant digits.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.15e}")
}

pub fn write_records<W: Write>(w: W, records: &[RunRecord]) -> io::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(TRACE_HEADER)?;
    for r in records {
        out.write_record([
            r.solver.clone(),
            r.iter.to_string(),
            fmt_float(r.cum_seconds),
            fmt_float(r.objective),
            fmt_float(r.train_acc),
            r.test_acc.map(fmt_float).unwrap_or_default(),
            fmt_float(r.step_size),
            r.cg_iters.to_string(),
        ])?;
    }
    out.flush()
}

/// Accumulates wall time only while running.
#[derive(Debug, Default)]
pub struct Stopwatch {
    elapsed: Duration,
    started: Option<Instant>,
}

impl Stopwatch {
    pub fn started() -> Self {
        Self {
            elapsed: Duration::ZERO,
            started: Some(Instant::now()),
        }
    }

    pub fn resume(&mut self) {
        if self.started.is_none() {
            self.started = Some(Instant::now());
        }
    }

    pub fn pause(&mut self) {
        if let Some(t) = self.started.take() {
            self.elapsed += t.elapsed();
        }
    }

    pub fn seconds(&self) -> f64 {
        let running = self.started.map_or(Duration::ZERO, |t| t.elapsed());
        (self.elapsed + running).as_secs_f64()
    }
}

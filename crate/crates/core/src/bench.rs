//! Experiment harness: Lipschitz estimation, configuration, sequential runs,
//! trace and summary CSVs, and the learning-rate sensitivity sweep.

use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng;
use thiserror::Error;

use crate::cg::LinearOperator;
use crate::dataset::{
    load_csv, load_libsvm_with, normalize_columns, stratified_subsample, train_test_split,
    DataError, LabeledDataset, LoadOptions, RowSet,
};
use crate::firstorder::{
    lr_grid, run_epochs, BatchSize, FirstOrderConfig, FirstOrderError, HyperParams, Method,
};
use crate::newton::{newton_solve, NewtonConfig, NewtonError, Variant};
use crate::objective::{dot, norm};
use crate::rng::{stream_rng, Purpose};
use crate::softmax::{SoftmaxError, SoftmaxProblem};
use crate::trace::{fmt_float, SolveTrace, TerminationReason};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Softmax(#[from] SoftmaxError),
    #[error(transparent)]
    Newton(#[from] NewtonError),
    #[error(transparent)]
    FirstOrder(#[from] FirstOrderError),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config: {0}")]
    Config(String),
    #[error("Lipschitz estimate needs at least one row")]
    EmptyDataset,
    #[error("Hessian at zero vanishes; no curvature to estimate")]
    ZeroCurvature,
}

fn io_err(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> BenchError {
    let context = context.into();
    move |source| BenchError::Io { context, source }
}

/// Dominant eigenvalue of the unregularized Hessian at `x = 0`, by power
/// iteration from a seeded random start.
pub fn estimate_lipschitz(
    prob: &SoftmaxProblem<'_>,
    iters: usize,
    seed: u64,
) -> Result<f64, BenchError> {
    if prob.n_rows() == 0 {
        return Err(BenchError::EmptyDataset);
    }
    let unregularized = SoftmaxProblem::new(prob.data(), 0.0)?;
    let d = unregularized.dim();
    let op = unregularized.hessian_on(RowSet::All(prob.n_rows()), &vec![0.0; d]);
    let mut rng = stream_rng(seed, Purpose::PowerIteration, 0);
    let mut v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let start_norm = norm(&v);
    v.iter_mut().for_each(|vi| *vi /= start_norm);
    let mut w = vec![0.0; d];
    let mut estimate = 0.0;
    for _ in 0..iters.max(1) {
        op.apply(&v, &mut w);
        estimate = dot(&v, &w);
        let w_norm = norm(&w);
        if w_norm == 0.0 {
            return Err(BenchError::ZeroCurvature);
        }
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / w_norm;
        }
    }
    op.apply(&v, &mut w);
    let rayleigh = dot(&v, &w).max(estimate);
    if rayleigh > 0.0 {
        Ok(rayleigh)
    } else {
        Err(BenchError::ZeroCurvature)
    }
}

/// `(L + λ) / λ`
pub fn condition_number(lipschitz: f64, lambda: f64) -> f64 {
    (lipschitz + lambda) / lambda
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataFormat {
    Libsvm,
    Csv,
}

impl FromStr for DataFormat {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "libsvm" => Ok(DataFormat::Libsvm),
            "csv" => Ok(DataFormat::Csv),
            _ => Err(BenchError::Config(format!("unknown format '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverSpec {
    Newton(Variant),
    FirstOrder(Method),
}

impl FromStr for SolverSpec {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Ok(v) = s.parse::<Variant>() {
            return Ok(SolverSpec::Newton(v));
        }
        s.parse::<Method>()
            .map(SolverSpec::FirstOrder)
            .map_err(|_| BenchError::Config(format!("unknown method '{s}'")))
    }
}

impl fmt::Display for SolverSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolverSpec::Newton(v) => write!(f, "{v}"),
            SolverSpec::FirstOrder(m) => write!(f, "{m}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LearningRate {
    Fixed(f64),
    Grid,
}

impl FromStr for LearningRate {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "grid" {
            return Ok(LearningRate::Grid);
        }
        match s.parse::<f64>() {
            Ok(v) if v > 0.0 && v.is_finite() => Ok(LearningRate::Fixed(v)),
            _ => Err(BenchError::Config(format!("bad learning rate '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub dataset: PathBuf,
    pub format: DataFormat,
    pub n_classes: usize,
    pub normalize: bool,
    /// Stratified subsample size applied before splitting.
    pub subsample: Option<usize>,
    pub split: f64,
    pub seed: u64,
    pub lambda: f64,
    pub solvers: Vec<SolverSpec>,
    pub newton: NewtonConfig,
    pub epochs: usize,
    pub batch_size: BatchSize,
    pub learning_rate: LearningRate,
    pub hyper: HyperParams,
    pub lipschitz_iters: usize,
    /// Test accuracy used for the summary's time-to-target column.
    pub target_accuracy: f64,
    pub out_dir: PathBuf,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            dataset: PathBuf::new(),
            format: DataFormat::Libsvm,
            n_classes: 2,
            normalize: true,
            subsample: None,
            split: 0.8,
            seed: 0,
            lambda: 1e-3,
            solvers: Vec::new(),
            newton: NewtonConfig::default(),
            epochs: 100,
            batch_size: BatchSize::Count(128),
            learning_rate: LearningRate::Grid,
            hyper: HyperParams::default(),
            lipschitz_iters: 200,
            target_accuracy: 0.9,
            out_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentSpec {
    /// Sets one option by its flag name (without leading dashes).
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), BenchError> {
        fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, BenchError> {
            value
                .parse()
                .map_err(|_| BenchError::Config(format!("bad value '{value}' for '{key}'")))
        }
        match key {
            "dataset" => self.dataset = PathBuf::from(value),
            "format" => self.format = value.parse()?,
            "classes" => self.n_classes = parse(key, value)?,
            "normalize" => self.normalize = parse(key, value)?,
            "subsample" => {
                self.subsample = match value {
                    "none" | "0" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "split" => self.split = parse(key, value)?,
            "seed" => {
                self.seed = parse(key, value)?;
                self.newton.samples.seed = self.seed;
            }
            "lambda" => self.lambda = parse(key, value)?,
            "method" => {
                self.solvers = value
                    .split(',')
                    .map(|s| s.trim().parse())
                    .collect::<Result<_, _>>()?
            }
            "cg-tol" => self.newton.cg.theta = parse(key, value)?,
            "cg-max-iters" => self.newton.cg.max_iters = parse(key, value)?,
            "epsilon" => self.newton.epsilon = parse(key, value)?,
            "epochs" => {
                self.epochs = parse(key, value)?;
                self.newton.max_outer_iters = self.epochs;
            }
            "batch-size" => self.batch_size = value.parse()?,
            "lr" => self.learning_rate = value.parse()?,
            "lipschitz-iters" => self.lipschitz_iters = parse(key, value)?,
            "target-acc" => self.target_accuracy = parse(key, value)?,
            "out" => self.out_dir = PathBuf::from(value),
            _ => return Err(BenchError::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// Applies a flat `key = value` file; `#` starts a comment.
    pub fn apply_config(&mut self, text: &str) -> Result<(), BenchError> {
        for (k, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                BenchError::Config(format!("line {}: expected key = value", k + 1))
            })?;
            self.set(key.trim(), value.trim())
                .map_err(|e| BenchError::Config(format!("line {}: {e}", k + 1)))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if self.solvers.is_empty() {
            return Err(BenchError::Config("no solver selected".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(BenchError::Config(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        if self.n_classes < 2 {
            return Err(BenchError::Config("need at least two classes".into()));
        }
        self.newton.validate()?;
        Ok(())
    }

    /// Loads, optionally subsamples and normalizes, then splits.
    pub fn prepare_data(&self) -> Result<(LabeledDataset, LabeledDataset), BenchError> {
        let opts = LoadOptions::new(self.n_classes);
        let mut ds = match self.format {
            DataFormat::Libsvm => load_libsvm_with(&self.dataset, &opts)?,
            DataFormat::Csv => load_csv(&self.dataset, &opts)?,
        };
        if let Some(size) = self.subsample {
            ds = stratified_subsample(&ds, size, self.seed)?;
        }
        if self.normalize {
            ds = normalize_columns(ds);
        }
        Ok(train_test_split(&ds, self.split, self.seed)?)
    }

    pub fn first_order_config(&self, method: Method, learning_rate: f64) -> FirstOrderConfig {
        FirstOrderConfig {
            batch_size: self.batch_size,
            epochs: self.epochs,
            hyper: self.hyper,
            seed: self.seed,
            ..FirstOrderConfig::new(method, learning_rate)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Diverged,
    Stagnated,
    Progressed,
}

impl RunStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RunStatus::Diverged => "diverged",
            RunStatus::Stagnated => "stagnated",
            RunStatus::Progressed => "progressed",
        }
    }
}

/// Labels runs of one sweep from their initial and final objectives. A run
/// diverged if its guard fired, its final value is not finite, or it ended
/// above its start; among the rest, a decrease under 1% of the largest one
/// is stagnation.
pub fn classify_runs(runs: &[(f64, f64, bool)]) -> Vec<RunStatus> {
    let diverged = |&(f0, f1, guard): &(f64, f64, bool)| guard || !f1.is_finite() || f1 > f0;
    let best = runs
        .iter()
        .filter(|r| !diverged(r))
        .map(|&(f0, f1, _)| f0 - f1)
        .fold(0.0, f64::max);
    runs.iter()
        .map(|r| {
            if diverged(r) {
                RunStatus::Diverged
            } else if r.0 - r.1 < 0.01 * best || best == 0.0 {
                RunStatus::Stagnated
            } else {
                RunStatus::Progressed
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct SweepRun {
    /// Grid exponent `k` of `10^k / L`.
    pub exponent: i32,
    pub learning_rate: f64,
    pub status: RunStatus,
    pub trace: SolveTrace,
}

/// Runs one method over the 13-point grid and classifies every run.
pub fn sensitivity_sweep(
    prob: &SoftmaxProblem<'_>,
    test_set: Option<&LabeledDataset>,
    base: &FirstOrderConfig,
    lipschitz: f64,
) -> Result<Vec<SweepRun>, BenchError> {
    let x0 = vec![0.0; prob.dim()];
    let mut traces = Vec::new();
    for (k, lr) in (-6..=6).zip(lr_grid(lipschitz)) {
        let cfg = FirstOrderConfig {
            learning_rate: lr,
            ..base.clone()
        };
        let name = format!("{}-lr{}", cfg.method, fmt_lr(lr));
        traces.push((k, lr, run_epochs(prob, &cfg, &x0, test_set, &name)?));
    }
    let summary: Vec<_> = traces
        .iter()
        .map(|(_, _, t)| (t.initial_objective(), t.final_objective(), t.diverged()))
        .collect();
    Ok(traces
        .into_iter()
        .zip(classify_runs(&summary))
        .map(|((exponent, learning_rate, trace), status)| SweepRun {
            exponent,
            learning_rate,
            status,
            trace,
        })
        .collect())
}

fn fmt_lr(lr: f64) -> String {
    format!("{lr:.6e}")
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub solver: String,
    pub learning_rate: Option<f64>,
    pub final_objective: f64,
    pub best_test_accuracy: Option<f64>,
    pub time_to_target: Option<f64>,
    pub termination: TerminationReason,
    pub status: Option<RunStatus>,
    pub trace_file: PathBuf,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub n_train: usize,
    pub n_test: usize,
    pub n_features: usize,
    pub n_classes: usize,
    pub lipschitz: Option<f64>,
    pub runs: Vec<RunSummary>,
}

/// Runs every configured solver sequentially, writing one trace CSV per run
/// and a `summary.csv`.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport, BenchError> {
    spec.validate()?;
    let (train, test) = spec.prepare_data()?;
    let prob = SoftmaxProblem::new(&train, spec.lambda)?;
    fs::create_dir_all(&spec.out_dir)
        .map_err(io_err(format!("creating {}", spec.out_dir.display())))?;

    let needs_grid = spec.learning_rate == LearningRate::Grid
        && spec
            .solvers
            .iter()
            .any(|s| matches!(s, SolverSpec::FirstOrder(_)));
    let lipschitz = if needs_grid {
        Some(estimate_lipschitz(&prob, spec.lipschitz_iters, spec.seed)?)
    } else {
        None
    };

    let x0 = vec![0.0; prob.dim()];
    let mut runs = Vec::new();
    for solver in &spec.solvers {
        match *solver {
            SolverSpec::Newton(variant) => {
                let cfg = variant.configure(spec.newton);
                let name = variant.cli_name().to_string();
                let trace = newton_solve(&prob, &cfg, &x0, Some(&test), &name)?;
                runs.push(write_run(spec, &trace, None, None)?);
            }
            SolverSpec::FirstOrder(method) => match (spec.learning_rate, lipschitz) {
                (LearningRate::Fixed(lr), _) => {
                    let cfg = spec.first_order_config(method, lr);
                    let name = format!("{method}-lr{}", fmt_lr(lr));
                    let trace = run_epochs(&prob, &cfg, &x0, Some(&test), &name)?;
                    runs.push(write_run(spec, &trace, Some(lr), None)?);
                }
                (LearningRate::Grid, Some(l)) => {
                    let base = spec.first_order_config(method, 1.0);
                    for run in sensitivity_sweep(&prob, Some(&test), &base, l)? {
                        runs.push(write_run(
                            spec,
                            &run.trace,
                            Some(run.learning_rate),
                            Some(run.status),
                        )?);
                    }
                }
                (LearningRate::Grid, None) => unreachable!("grid implies an estimate"),
            },
        }
    }
    write_summary(
        &spec.out_dir.join("summary.csv"),
        &runs,
        spec.target_accuracy,
    )?;
    Ok(ExperimentReport {
        n_train: train.n_rows(),
        n_test: test.n_rows(),
        n_features: train.n_features(),
        n_classes: train.n_classes(),
        lipschitz,
        runs,
    })
}

fn write_run(
    spec: &ExperimentSpec,
    trace: &SolveTrace,
    learning_rate: Option<f64>,
    status: Option<RunStatus>,
) -> Result<RunSummary, BenchError> {
    let path = spec.out_dir.join(format!("{}.csv", trace.solver));
    trace
        .write_csv(&path)
        .map_err(io_err(format!("writing {}", path.display())))?;
    Ok(RunSummary {
        solver: trace.solver.clone(),
        learning_rate,
        final_objective: trace.final_objective(),
        best_test_accuracy: trace.best_test_accuracy(),
        time_to_target: trace.time_to_accuracy(spec.target_accuracy),
        termination: trace.termination,
        status,
        trace_file: path,
    })
}

fn write_summary(path: &Path, runs: &[RunSummary], target: f64) -> Result<(), BenchError> {
    let file = fs::File::create(path).map_err(io_err(format!("writing {}", path.display())))?;
    let mut out = csv::Writer::from_writer(BufWriter::new(file));
    let time_col = format!("time_to_{target}");
    let opt = |v: Option<f64>| v.map(fmt_float).unwrap_or_default();
    let result = (|| -> Result<(), csv::Error> {
        out.write_record([
            "solver",
            "learning_rate",
            "final_objective",
            "best_test_acc",
            time_col.as_str(),
            "termination",
            "status",
        ])?;
        for r in runs {
            out.write_record([
                r.solver.clone(),
                opt(r.learning_rate),
                fmt_float(r.final_objective),
                opt(r.best_test_accuracy),
                opt(r.time_to_target),
                r.termination.to_string(),
                r.status.map(|s| s.as_str().to_string()).unwrap_or_default(),
            ])?;
        }
        out.flush()?;
        Ok(())
    })();
    result.map_err(|e| BenchError::Io {
        context: format!("writing {}", path.display()),
        source: e.into(),
    })?;
    Ok(())
}

/// Prints a one-line description of a report per run.
pub fn print_report<W: Write>(mut w: W, report: &ExperimentReport) -> std::io::Result<()> {
    writeln!(
        w,
        "train {} x {}, test {}, classes {}",
        report.n_train, report.n_features, report.n_test, report.n_classes
    )?;
    if let Some(l) = report.lipschitz {
        writeln!(w, "L = {l:.6e}")?;
    }
    for r in &report.runs {
        writeln!(
            w,
            "{:<28} final {:>14.6e}  best test {:>7}  {}{}",
            r.solver,
            r.final_objective,
            r.best_test_accuracy
                .map_or("-".into(), |a| format!("{a:.4}")),
            r.termination,
            r.status
                .map_or(String::new(), |s| format!(" ({})", s.as_str())),
        )?;
    }
    Ok(())
}

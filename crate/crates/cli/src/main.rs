use std::fs;
use std::io;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use subnewton::bench::{
    condition_number, estimate_lipschitz, print_report, run_experiment, ExperimentSpec,
};
use subnewton::SoftmaxProblem;

#[derive(Parser)]
#[command(
    name = "subnewton",
    version,
    about = "Sub-sampled Newton-CG benchmarks for softmax regression"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run solvers and write trace CSVs plus a summary.
    Run(Options),
    /// Estimate the gradient Lipschitz constant and condition number.
    Lipschitz(Options),
}

/// Every flag overrides the same key in `--config`.
#[derive(Args)]
struct Options {
    /// Flat `key = value` file; keys match the long flag names.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<String>,
    /// libsvm or csv
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    classes: Option<String>,
    /// Comma-separated: full-newton, subnewton-100, subnewton-20, momentum,
    /// adagrad, adadelta, rmsprop, adam
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long)]
    cg_tol: Option<String>,
    #[arg(long)]
    cg_max_iters: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    /// Row count (128) or fraction (0.2)
    #[arg(long)]
    batch_size: Option<String>,
    /// A value or `grid`
    #[arg(long)]
    lr: Option<String>,
    #[arg(long)]
    split: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// true or false
    #[arg(long)]
    normalize: Option<String>,
    /// Stratified subsample size taken before splitting
    #[arg(long)]
    subsample: Option<String>,
    #[arg(long)]
    lipschitz_iters: Option<String>,
    #[arg(long)]
    target_acc: Option<String>,
    #[arg(long)]
    out: Option<String>,
}

impl Options {
    fn overrides(&self) -> Vec<(&'static str, &String)> {
        [
            ("dataset", &self.dataset),
            ("format", &self.format),
            ("classes", &self.classes),
            ("method", &self.method),
            ("lambda", &self.lambda),
            ("cg-tol", &self.cg_tol),
            ("cg-max-iters", &self.cg_max_iters),
            ("epochs", &self.epochs),
            ("batch-size", &self.batch_size),
            ("lr", &self.lr),
            ("split", &self.split),
            ("seed", &self.seed),
            ("normalize", &self.normalize),
            ("subsample", &self.subsample),
            ("lipschitz-iters", &self.lipschitz_iters),
            ("target-acc", &self.target_acc),
            ("out", &self.out),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.as_ref().map(|v| (k, v)))
        .collect()
    }

    fn spec(&self) -> Result<ExperimentSpec> {
        let mut spec = ExperimentSpec::default();
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            spec.apply_config(&text)
                .with_context(|| format!("in config {}", path.display()))?;
        }
        for (key, value) in self.overrides() {
            spec.set(key, value).with_context(|| format!("--{key}"))?;
        }
        Ok(spec)
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(opts) => {
            let spec = opts.spec()?;
            let report = run_experiment(&spec)?;
            print_report(io::stdout().lock(), &report)?;
            println!("traces written to {}", spec.out_dir.display());
        }
        Command::Lipschitz(opts) => {
            let spec = opts.spec()?;
            let (train, _) = spec.prepare_data()?;
            let prob = SoftmaxProblem::new(&train, spec.lambda)?;
            let l = estimate_lipschitz(&prob, spec.lipschitz_iters, spec.seed)?;
            println!(
                "n = {}, p = {}, C = {}",
                train.n_rows(),
                train.n_features(),
                train.n_classes()
            );
            println!("L = {l:.6e}");
            println!(
                "condition number (L + lambda) / lambda = {:.6e}",
                condition_number(l, spec.lambda)
            );
        }
    }
    Ok(())
}

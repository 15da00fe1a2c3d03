//! Sub-sampled Newton-CG for ℓ2-regularized softmax regression, with
//! first-order baselines and a small benchmarking harness.

pub mod bench;
pub mod cg;
pub mod dataset;
pub mod firstorder;
pub mod linesearch;
pub mod newton;
pub mod objective;
pub mod rng;
pub mod sampling;
pub mod softmax;
pub mod trace;

pub use dataset::{LabeledDataset, RowSet};
pub use softmax::{SoftmaxProblem, WeightVector};

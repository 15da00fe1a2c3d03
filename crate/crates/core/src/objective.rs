//! The finite-sum interface the solvers work against.

use crate::cg::LinearOperator;
use crate::dataset::RowSet;

/// `F(x) = Σ_{i<n} f_i(x) + λ/2 ‖x‖²`
///
/// Sampled evaluations over `S` return `(n/|S|) Σ_{i∈S} ∇f_i(x) + λ x` and the
/// matching Hessian. `RowSet::All(n)` must reproduce the exact quantities.
pub trait FiniteSum: Sync {
    fn dim(&self) -> usize;

    fn n_terms(&self) -> usize;

    fn lambda(&self) -> f64;

    fn value(&self, x: &[f64]) -> f64;

    fn gradient_on(&self, rows: RowSet<'_>, x: &[f64]) -> Vec<f64>;

    fn hessian_on<'s>(&'s self, rows: RowSet<'s>, x: &[f64]) -> Box<dyn LinearOperator + 's>;

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.gradient_on(RowSet::All(self.n_terms()), x)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

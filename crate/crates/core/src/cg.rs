//! Matrix-free conjugate gradient for `H p = -g` with best-iterate tracking.

use thiserror::Error;

use crate::objective::{dot, norm};

/// Symmetric linear map `v ↦ H v`.
pub trait LinearOperator {
    fn dim(&self) -> usize;

    /// Writes `H v` into `out`; both slices have length `dim()`.
    fn apply(&self, v: &[f64], out: &mut [f64]);
}

impl<T: LinearOperator + ?Sized> LinearOperator for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) {
        (**self).apply(v, out)
    }
}

impl<T: LinearOperator + ?Sized> LinearOperator for Box<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) {
        (**self).apply(v, out)
    }
}

/// Wraps a closure as an operator.
pub struct FnOperator<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64], &mut [f64])> FnOperator<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&[f64], &mut [f64])> LinearOperator for FnOperator<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) {
        (self.f)(v, out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgConfig {
    /// Relative residual tolerance `θ`.
    pub theta: f64,
    /// Maximum number of operator applications.
    pub max_iters: usize,
}

impl Default for CgConfig {
    fn default() -> Self {
        Self {
            theta: 1e-4,
            max_iters: 10,
        }
    }
}

impl CgConfig {
    pub fn validate(&self) -> Result<(), CgError> {
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(CgError::InvalidConfig(format!(
                "theta must lie in (0, 1), got {}",
                self.theta
            )));
        }
        if self.max_iters == 0 {
            return Err(CgError::InvalidConfig(
                "max_iters must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgReport {
    /// The iterate with the smallest residual norm.
    pub solution: Vec<f64>,
    /// `‖H p_best + g‖` as tracked by the recurrence.
    pub residual_norm: f64,
    pub iterations: usize,
    /// `residual_norm <= θ ‖g‖`
    pub converged: bool,
    /// Residual norm after each iteration.
    pub residual_history: Vec<f64>,
}

#[derive(Debug, Error, PartialEq)]
pub enum CgError {
    #[error("invalid CG configuration: {0}")]
    InvalidConfig(String),
    #[error("operator dimension {op} does not match right-hand side length {rhs}")]
    DimensionMismatch { op: usize, rhs: usize },
    #[error("non-positive curvature s'Hs = {curvature:e} at CG iteration {iteration}")]
    NonPositiveCurvature { iteration: usize, curvature: f64 },
    #[error("non-finite value in CG at iteration {0}")]
    NonFinite(usize),
}

const CURVATURE_FLOOR: f64 = 1e-32;

/// Approximately solves `H p = -g`, stopping once `‖H p + g‖ <= θ ‖g‖` or after
/// `max_iters` applications of `H`.
pub fn cg_solve<O: LinearOperator + ?Sized>(
    op: &O,
    g: &[f64],
    cfg: &CgConfig,
) -> Result<CgReport, CgError> {
    cfg.validate()?;
    let d = g.len();
    if op.dim() != d {
        return Err(CgError::DimensionMismatch {
            op: op.dim(),
            rhs: d,
        });
    }
    let g_norm = norm(g);
    if !g_norm.is_finite() {
        return Err(CgError::NonFinite(0));
    }
    if g_norm == 0.0 {
        return Ok(CgReport {
            solution: vec![0.0; d],
            residual_norm: 0.0,
            iterations: 0,
            converged: true,
            residual_history: Vec::new(),
        });
    }
    let tol = cfg.theta * g_norm;

    let mut p = vec![0.0; d];
    let mut r: Vec<f64> = g.iter().map(|v| -v).collect();
    let mut s = r.clone();
    let mut hs = vec![0.0; d];
    let mut rr = g_norm * g_norm;

    let mut best = p.clone();
    let mut best_norm = f64::INFINITY;
    let mut history = Vec::with_capacity(cfg.max_iters);
    let mut converged = false;

    for k in 0..cfg.max_iters {
        op.apply(&s, &mut hs);
        let curvature = dot(&s, &hs);
        if !curvature.is_finite() {
            return Err(CgError::NonFinite(k));
        }
        if curvature <= CURVATURE_FLOOR * dot(&s, &s) {
            return Err(CgError::NonPositiveCurvature {
                iteration: k,
                curvature,
            });
        }
        let alpha = rr / curvature;
        for i in 0..d {
            p[i] += alpha * s[i];
            r[i] -= alpha * hs[i];
        }
        let rr_next = dot(&r, &r);
        let r_norm = rr_next.sqrt();
        history.push(r_norm);
        if r_norm <= best_norm {
            best_norm = r_norm;
            best.copy_from_slice(&p);
        }
        if r_norm <= tol {
            converged = true;
            break;
        }
        let beta = rr_next / rr;
        for i in 0..d {
            s[i] = r[i] + beta * s[i];
        }
        rr = rr_next;
    }

    Ok(CgReport {
        solution: best,
        residual_norm: best_norm,
        iterations: history.len(),
        converged,
        residual_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(entries: Vec<f64>) -> FnOperator<impl Fn(&[f64], &mut [f64])> {
        FnOperator::new(entries.len(), move |v: &[f64], out: &mut [f64]| {
            for i in 0..v.len() {
                out[i] = entries[i] * v[i];
            }
        })
    }

    #[test]
    fn identity_is_one_step() {
        let g = [1.0, -2.0, 0.5];
        let rep = cg_solve(&diag(vec![1.0; 3]), &g, &CgConfig::default()).unwrap();
        assert_eq!(rep.iterations, 1);
        assert_eq!(rep.residual_norm, 0.0);
        assert!(rep.converged);
        assert_eq!(rep.solution, vec![-1.0, 2.0, -0.5]);
    }

    #[test]
    fn diagonal_four_by_four() {
        let cfg = CgConfig {
            theta: 1e-12,
            max_iters: 10,
        };
        let rep = cg_solve(&diag(vec![1.0, 2.0, 3.0, 4.0]), &[1.0; 4], &cfg).unwrap();
        assert!(rep.iterations <= 4);
        for (i, p) in rep.solution.iter().enumerate() {
            assert!((p + 1.0 / (i as f64 + 1.0)).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_rhs_short_circuits() {
        let rep = cg_solve(&diag(vec![2.0; 3]), &[0.0; 3], &CgConfig::default()).unwrap();
        assert_eq!(rep.solution, vec![0.0; 3]);
        assert_eq!(rep.iterations, 0);
        assert!(rep.converged);
    }

    #[test]
    fn negative_curvature_is_reported() {
        let err = cg_solve(&diag(vec![-1.0, 1.0]), &[1.0, 0.0], &CgConfig::default()).unwrap_err();
        assert!(matches!(
            err,
            CgError::NonPositiveCurvature { iteration: 0, .. }
        ));
    }

    #[test]
    fn iteration_cap_is_applications() {
        let calls = std::cell::Cell::new(0);
        let op = FnOperator::new(5, |v: &[f64], out: &mut [f64]| {
            calls.set(calls.get() + 1);
            for i in 0..5 {
                out[i] = (i as f64 + 1.0).powi(3) * v[i];
            }
        });
        let cfg = CgConfig {
            theta: 1e-14,
            max_iters: 3,
        };
        let rep = cg_solve(&op, &[1.0; 5], &cfg).unwrap();
        assert_eq!(rep.iterations, 3);
        assert_eq!(calls.get(), 3);
        assert!(!rep.converged);
    }

    #[test]
    fn invalid_config() {
        let op = diag(vec![1.0]);
        for (theta, max_iters) in [(0.0, 5), (1.0, 5), (0.5, 0), (f64::NAN, 5)] {
            let cfg = CgConfig { theta, max_iters };
            assert!(matches!(
                cg_solve(&op, &[1.0], &cfg),
                Err(CgError::InvalidConfig(_))
            ));
        }
        assert!(matches!(
            cg_solve(&op, &[1.0, 2.0], &CgConfig::default()),
            Err(CgError::DimensionMismatch { .. })
        ));
    }
}

//! Armijo back-tracking line search.

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearchConfig {
    /// Sufficient-decrease constant `β`.
    pub beta: f64,
    /// Back-tracking factor `ρ`.
    pub rho: f64,
    /// Maximum number of step reductions.
    pub max_iters: usize,
    pub alpha0: f64,
}

impl Default for LineSearchConfig {
    fn default() -> Self {
        Self {
            beta: 1e-4,
            rho: 0.5,
            max_iters: 50,
            alpha0: 1.0,
        }
    }
}

impl LineSearchConfig {
    pub fn validate(&self) -> Result<(), LineSearchError> {
        let open_unit = |v: f64| v > 0.0 && v < 1.0;
        if !open_unit(self.beta) || !open_unit(self.rho) {
            return Err(LineSearchError::InvalidConfig(format!(
                "beta and rho must lie in (0, 1), got beta = {}, rho = {}",
                self.beta, self.rho
            )));
        }
        if self.max_iters == 0 || !(self.alpha0 > 0.0 && self.alpha0.is_finite()) {
            return Err(LineSearchError::InvalidConfig(format!(
                "need max_iters >= 1 and a positive finite alpha0, got {} and {}",
                self.max_iters, self.alpha0
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub alpha: f64,
    /// Objective value at the accepted step.
    pub value: f64,
    pub evals: usize,
    pub backtracks: usize,
}

#[derive(Debug, Error, PartialEq)]
pub enum LineSearchError {
    #[error("invalid line-search configuration: {0}")]
    InvalidConfig(String),
    #[error("starting objective is not finite ({0})")]
    NonFiniteStart(f64),
    #[error("not a descent direction: slope {0:e} >= 0")]
    AscentDirection(f64),
    #[error("no sufficient decrease after {evals} evaluations (smallest step {alpha:e})")]
    NoDecrease { evals: usize, alpha: f64 },
}

/// Returns the first `α = α₀ ρ^i`, `i <= max_iters`, with
/// `f(α) <= f0 + α β slope`. Non-finite trial values count as rejections.
pub fn line_search(
    mut f: impl FnMut(f64) -> f64,
    f0: f64,
    slope: f64,
    cfg: &LineSearchConfig,
) -> Result<Step, LineSearchError> {
    cfg.validate()?;
    if !f0.is_finite() {
        return Err(LineSearchError::NonFiniteStart(f0));
    }
    if slope.is_nan() || slope >= 0.0 {
        return Err(LineSearchError::AscentDirection(slope));
    }
    let mut alpha = cfg.alpha0;
    for i in 0..=cfg.max_iters {
        if i > 0 {
            alpha *= cfg.rho;
        }
        let value = f(alpha);
        if value.is_finite() && value <= f0 + alpha * cfg.beta * slope {
            return Ok(Step {
                alpha,
                value,
                evals: i + 1,
                backtracks: i,
            });
        }
    }
    Err(LineSearchError::NoDecrease {
        evals: cfg.max_iters + 1,
        alpha,
    })
}

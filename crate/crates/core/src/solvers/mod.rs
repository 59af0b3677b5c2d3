//! Preconditioned Krylov solvers and the labeling harness that finds the
//! fastest converging method for a matrix.

mod catalog;
mod krylov;
mod label;
mod precond;

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use catalog::{Method, MethodCatalog, PreconditionerKind, SolverKind};
pub use krylov::{solve, Solution};
pub use label::{label_matrix, slowdown, LabelOptions, LabelRecord, RankBy, RhsPolicy};
pub use precond::{build_preconditioner, Preconditioner};

/// Monotonic time source in seconds from an arbitrary origin.
pub trait Clock {
    fn seconds(&self) -> f64;
}

/// A clock that never advances: walltimes read 0 and timeouts never fire.
#[derive(Debug, Clone, Copy, Default)]
pub struct NullClock;

impl Clock for NullClock {
    fn seconds(&self) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveConfig {
    /// Relative residual target `||b - Ax|| / ||b||`.
    pub rtol: f64,
    /// Iteration cap; `None` means `10 * order`, at most 20000.
    pub max_iters: Option<usize>,
    /// Wall-clock cap per solve in seconds.
    pub timeout: f64,
    pub gmres_restart: usize,
    /// Relaxation weight for Jacobi and SSOR.
    pub omega: f64,
    pub block_size: usize,
    /// A residual growing past `divergence_tol * ||b||` counts as divergence.
    pub divergence_tol: f64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            rtol: 1e-6,
            max_iters: None,
            timeout: 30.0,
            gmres_restart: 30,
            omega: 1.0,
            block_size: 4,
            divergence_tol: 1e5,
        }
    }
}

impl SolveConfig {
    pub const MAX_ITERS_CAP: usize = 20_000;

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::ConfigError(format!("{what} (config: {self:?})")));
        if !(self.rtol > 0.0 && self.rtol < 1.0) {
            return bad("rtol must lie in (0, 1)");
        }
        if self.max_iters == Some(0) {
            return bad("max_iters must be at least 1");
        }
        if !(self.timeout > 0.0) {
            return bad("timeout must be positive");
        }
        if self.gmres_restart < 1 {
            return bad("gmres_restart must be at least 1");
        }
        if !(self.omega > 0.0 && self.omega < 2.0) {
            return bad("omega must lie in (0, 2)");
        }
        if self.block_size < 1 {
            return bad("block_size must be at least 1");
        }
        if !(self.divergence_tol > 1.0) {
            return bad("divergence_tol must exceed 1");
        }
        Ok(())
    }

    pub fn max_iters_for(&self, order: usize) -> usize {
        self.max_iters
            .unwrap_or_else(|| (10 * order).min(Self::MAX_ITERS_CAP))
            .max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIters,
    Diverged,
    Breakdown,
    Timeout,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxIters => "max_iters",
            SolveStatus::Diverged => "diverged",
            SolveStatus::Breakdown => "breakdown",
            SolveStatus::Timeout => "timeout",
        }
    }
}

/// Result summary of one solve.
///
/// `final_relres` is recomputed from the returned iterate; a non-finite
/// residual is reported as `f64::MAX`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOutcome {
    pub status: SolveStatus,
    pub iterations: usize,
    pub final_relres: f64,
    pub walltime: f64,
}

impl SolveOutcome {
    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }
}

pub(crate) fn relative_residual(a: &crate::CsrMatrix, b: &[f64], x: &[f64]) -> f64 {
    let mut r: Vec<f64> = alloc::vec![0.0; b.len()];
    a.residual_into(b, x, &mut r);
    let rel = crate::math::norm2(&r) / crate::math::norm2(b);
    if rel.is_finite() {
        rel
    } else {
        f64::MAX
    }
}

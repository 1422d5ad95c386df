//! Shared error types.

use thiserror::Error;

/// Numerical-routine failures that must surface instead of being clamped.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericsError {
    #[error("inverse CDF did not converge after {iterations} iterations (residual {residual:.3e})")]
    InverseCdfDiverged { iterations: usize, residual: f64 },
    #[error("eigenvalue solver failed on a {rows}x{cols} matrix: {detail}")]
    EigenFailure {
        rows: usize,
        cols: usize,
        detail: String,
    },
}

/// Bad inputs to device or process evaluations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum InputError {
    #[error("irradiance must be non-negative, got {0}")]
    NegativeIrradiance(f64),
    #[error("bus voltage must be positive, got {0} p.u.")]
    NonPositiveVoltage(f64),
}

/// Outcome of an algebraic solve that failed to produce a solution.
///
/// Divergence is a collapse signal for the simulator, not a crash; callers
/// decide whether to treat it as an event or as an error.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("Newton iteration did not converge in {iterations} iterations (max mismatch {max_mismatch:.3e} p.u.)")]
    AlgebraicDivergence {
        iterations: usize,
        max_mismatch: f64,
    },
    #[error("algebraic Jacobian is singular")]
    JacobianSingular,
}

/// Case or scenario validation failure; always names the offending field.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{file}: {field}: {constraint}")]
pub struct ValidationError {
    pub file: String,
    pub field: String,
    pub constraint: String,
}

impl ValidationError {
    pub fn new(
        file: impl Into<String>,
        field: impl Into<String>,
        constraint: impl Into<String>,
    ) -> Self {
        Self {
            file: file.into(),
            field: field.into(),
            constraint: constraint.into(),
        }
    }
}

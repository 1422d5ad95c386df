//! Collapse detection and margin bookkeeping: the critical eigenvalue of
//! the algebraic Jacobian, the first-of-three collapse rule, and the
//! conversion from collapse time to a MW margin.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::NumericsError;

/// Which criterion declared the collapse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CollapseCause {
    JacobianSignChange,
    AlgebraicDivergence,
    VoltageFloor,
}

impl std::fmt::Display for CollapseCause {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CollapseCause::JacobianSignChange => write!(f, "jacobian-sign-change"),
            CollapseCause::AlgebraicDivergence => write!(f, "algebraic-divergence"),
            CollapseCause::VoltageFloor => write!(f, "voltage-floor"),
        }
    }
}

/// One periodic sample of the critical eigenvalue.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenSample {
    pub t: f64,
    pub value: f64,
}

/// Terminal event of a trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseEvent {
    pub t_collapse: f64,
    /// Ramp distance travelled up to the collapse, `rate * t_collapse`.
    pub z_star: f64,
    /// `z_star * P0`, computed once so the identity holds exactly.
    pub margin_mw: f64,
    pub cause: CollapseCause,
    /// Recent critical-eigenvalue samples for post-mortem inspection.
    pub eigen_trace: Vec<EigenSample>,
}

impl CollapseEvent {
    pub fn new(
        t_collapse: f64,
        cause: CollapseCause,
        ramp_rate: f64,
        p0_mw: f64,
        eigen_trace: Vec<EigenSample>,
    ) -> Self {
        let z_star = ramp_rate * t_collapse;
        Self {
            t_collapse,
            z_star,
            margin_mw: margin_from_event(z_star, p0_mw),
            cause,
            eigen_trace,
        }
    }
}

/// MW distance to collapse: `z_star * P0`.
pub fn margin_from_event(z_star: f64, p0_mw: f64) -> f64 {
    z_star * p0_mw
}

/// Real part of the eigenvalue of smallest absolute value.
///
/// Complex pairs count by modulus; ties break deterministically on
/// (|lambda|, Re lambda) so repeated runs pick the same eigenvalue.
pub fn critical_eigenvalue(jacobian: &DMatrix<f64>) -> Result<f64, NumericsError> {
    debug_assert_eq!(jacobian.nrows(), jacobian.ncols());
    let eigs = jacobian.clone().complex_eigenvalues();
    let mut best: Option<(f64, f64)> = None;
    for e in eigs.iter() {
        if !e.re.is_finite() || !e.im.is_finite() {
            return Err(NumericsError::EigenFailure {
                rows: jacobian.nrows(),
                cols: jacobian.ncols(),
                detail: format!("non-finite eigenvalue; matrix dump: {jacobian:?}"),
            });
        }
        let key = (e.norm(), e.re);
        match best {
            None => best = Some(key),
            Some(b) if key < b => best = Some(key),
            _ => {}
        }
    }
    best.map(|(_, re)| re).ok_or_else(|| NumericsError::EigenFailure {
        rows: jacobian.nrows(),
        cols: jacobian.ncols(),
        detail: "empty spectrum".into(),
    })
}

/// Outcome of the latest integration step, as seen by the detector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepOutcome {
    /// Step accepted over `[t_prev, t_new]`.
    Converged { t_prev: f64, t_new: f64 },
    /// The algebraic solve failed over `[t_prev, t_new]` even after the
    /// reduced-step retry.
    DivergedAfterRetry { t_prev: f64, t_new: f64 },
}

/// First-of-three collapse rule.
///
/// Fires on (a) a sign change between consecutive critical-eigenvalue
/// samples, (b) algebraic divergence surviving the retry, or (c) any bus
/// voltage below the floor. The reported time is the earlier boundary of
/// the triggering interval; when several criteria fire in the same step the
/// earliest time wins.
pub fn detect_collapse(
    eigen_history: &[EigenSample],
    last_step: StepOutcome,
    v: &[f64],
    voltage_floor: f64,
) -> Option<(CollapseCause, f64)> {
    let mut hit: Option<(CollapseCause, f64)> = None;
    let mut consider = |cause: CollapseCause, t: f64| match hit {
        Some((_, t0)) if t0 <= t => {}
        _ => hit = Some((cause, t)),
    };

    for pair in eigen_history.windows(2) {
        if (pair[0].value > 0.0) != (pair[1].value > 0.0) {
            consider(CollapseCause::JacobianSignChange, pair[0].t);
            break;
        }
    }
    match last_step {
        StepOutcome::DivergedAfterRetry { t_prev, .. } => {
            consider(CollapseCause::AlgebraicDivergence, t_prev);
        }
        StepOutcome::Converged { t_prev, .. } => {
            if v.iter().any(|&vi| vi < voltage_floor) {
                consider(CollapseCause::VoltageFloor, t_prev);
            }
        }
    }
    hit
}

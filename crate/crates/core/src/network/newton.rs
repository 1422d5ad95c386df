//! Newton solution of the algebraic power-balance equations and the exact
//! algebraic Jacobian used for collapse monitoring.

use nalgebra::{DMatrix, DVector};

use super::{AlgebraicState, Complex64};
use crate::error::SolveError;

/// How the solver treats each bus. Q-limited generators flip Pv -> Pq
/// between solves; the case's static typing is only the starting point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BusKind {
    Slack { v_set: f64 },
    Pv { v_set: f64 },
    Pq,
}

/// Net device injection seen by the network at one bus, as a function of
/// the local voltage magnitude. Implementations must make `injection` and
/// `injection_dv` consistent; the Jacobian check tests enforce it.
pub trait InjectionModel {
    /// Net injected (P, Q) in p.u. at internal bus index `bus`, voltage `v`.
    fn injection(&self, bus: usize, v: f64) -> (f64, f64);
    /// Derivative of the net injection with respect to `v`.
    fn injection_dv(&self, bus: usize, v: f64) -> (f64, f64);
}

/// Fixed per-bus injections, voltage independent.
#[derive(Debug, Clone)]
pub struct ConstantInjections {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

impl InjectionModel for ConstantInjections {
    fn injection(&self, bus: usize, _v: f64) -> (f64, f64) {
        (self.p[bus], self.q[bus])
    }
    fn injection_dv(&self, _bus: usize, _v: f64) -> (f64, f64) {
        (0.0, 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    /// Convergence tolerance on the max power mismatch (p.u.).
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        // Divergence is a collapse indicator here, so there is deliberately
        // no line search or other globalization that could mask it.
        Self {
            tol: 1e-8,
            max_iter: 20,
        }
    }
}

/// Index map from bus space to the reduced unknown vector:
/// theta for every non-slack bus, then V for every PQ bus.
struct VarIndex {
    theta_pos: Vec<Option<usize>>,
    v_pos: Vec<Option<usize>>,
    n_total: usize,
}

impl VarIndex {
    fn build(kinds: &[BusKind]) -> Self {
        let mut theta_pos = vec![None; kinds.len()];
        let mut v_pos = vec![None; kinds.len()];
        let mut next = 0;
        for (i, kind) in kinds.iter().enumerate() {
            if !matches!(kind, BusKind::Slack { .. }) {
                theta_pos[i] = Some(next);
                next += 1;
            }
        }
        for (i, kind) in kinds.iter().enumerate() {
            if matches!(kind, BusKind::Pq) {
                v_pos[i] = Some(next);
                next += 1;
            }
        }
        Self {
            theta_pos,
            v_pos,
            n_total: next,
        }
    }
}

fn apply_setpoints(state: &mut AlgebraicState, kinds: &[BusKind]) {
    for (i, kind) in kinds.iter().enumerate() {
        match kind {
            BusKind::Slack { v_set } => {
                state.v[i] = *v_set;
                state.theta[i] = 0.0;
            }
            BusKind::Pv { v_set } => state.v[i] = *v_set,
            BusKind::Pq => {}
        }
    }
}

/// Power mismatches `calculated - injected` in the reduced ordering:
/// P rows for non-slack buses, then Q rows for PQ buses.
pub fn mismatch<M: InjectionModel>(
    ybus: &DMatrix<Complex64>,
    model: &M,
    kinds: &[BusKind],
    state: &AlgebraicState,
) -> DVector<f64> {
    let idx = VarIndex::build(kinds);
    let (p_calc, q_calc) = super::calc_injections(ybus, state);
    let mut g = DVector::zeros(idx.n_total);
    for i in 0..kinds.len() {
        let (p_inj, q_inj) = model.injection(i, state.v[i]);
        if let Some(row) = idx.theta_pos[i] {
            g[row] = p_calc[i] - p_inj;
        }
        if let Some(row) = idx.v_pos[i] {
            g[row] = q_calc[i] - q_inj;
        }
    }
    g
}

/// Exact partial derivatives of the mismatches with respect to the reduced
/// unknowns (theta for non-slack buses, V for PQ buses), in the same
/// ordering as [`mismatch`] and [`solve_algebraic`].
pub fn algebraic_jacobian<M: InjectionModel>(
    ybus: &DMatrix<Complex64>,
    model: &M,
    kinds: &[BusKind],
    state: &AlgebraicState,
) -> DMatrix<f64> {
    let idx = VarIndex::build(kinds);
    let n = kinds.len();
    let (p_calc, q_calc) = super::calc_injections(ybus, state);
    let mut jac = DMatrix::zeros(idx.n_total, idx.n_total);

    for i in 0..n {
        let vi = state.v[i];
        let gii = ybus[(i, i)].re;
        let bii = ybus[(i, i)].im;
        let p_row = idx.theta_pos[i];
        let q_row = idx.v_pos[i];
        for j in 0..n {
            let y = ybus[(i, j)];
            if i != j && y.norm_sqr() == 0.0 {
                continue;
            }
            let (dp_dth, dp_dv, dq_dth, dq_dv) = if i == j {
                (
                    -q_calc[i] - bii * vi * vi,
                    p_calc[i] / vi + gii * vi,
                    p_calc[i] - gii * vi * vi,
                    q_calc[i] / vi - bii * vi,
                )
            } else {
                let vj = state.v[j];
                let thij = state.theta[i] - state.theta[j];
                let (sin, cos) = thij.sin_cos();
                let gij = y.re;
                let bij = y.im;
                (
                    vi * vj * (gij * sin - bij * cos),
                    vi * (gij * cos + bij * sin),
                    -vi * vj * (gij * cos + bij * sin),
                    vi * (gij * sin - bij * cos),
                )
            };
            if let Some(col) = idx.theta_pos[j] {
                if let Some(row) = p_row {
                    jac[(row, col)] = dp_dth;
                }
                if let Some(row) = q_row {
                    jac[(row, col)] = dq_dth;
                }
            }
            if let Some(col) = idx.v_pos[j] {
                if let Some(row) = p_row {
                    jac[(row, col)] = dp_dv;
                }
                if let Some(row) = q_row {
                    jac[(row, col)] = dq_dv;
                }
            }
        }
        // Device voltage sensitivity enters the diagonal V columns.
        if let Some(col) = idx.v_pos[i] {
            let (dp_inj, dq_inj) = model.injection_dv(i, vi);
            if let Some(row) = p_row {
                jac[(row, col)] -= dp_inj;
            }
            if let Some(row) = q_row {
                jac[(row, col)] -= dq_inj;
            }
        }
    }
    jac
}

/// Newton iteration on the power mismatches.
///
/// Setpoints from `kinds` are imposed on the guess; on success the returned
/// state satisfies `max |mismatch| <= opts.tol`. Non-convergence and
/// singular Jacobians come back as [`SolveError`] values so callers can
/// treat them as collapse signals.
pub fn solve_algebraic<M: InjectionModel>(
    ybus: &DMatrix<Complex64>,
    model: &M,
    kinds: &[BusKind],
    guess: &AlgebraicState,
    opts: NewtonOptions,
) -> Result<AlgebraicState, SolveError> {
    let idx = VarIndex::build(kinds);
    let mut state = guess.clone();
    apply_setpoints(&mut state, kinds);

    let mut g = mismatch(ybus, model, kinds, &state);
    let mut max_mis = g.amax();
    if !max_mis.is_finite() {
        return Err(SolveError::AlgebraicDivergence {
            iterations: 0,
            max_mismatch: max_mis,
        });
    }
    if max_mis <= opts.tol {
        return Ok(state);
    }

    for iter in 1..=opts.max_iter {
        let jac = algebraic_jacobian(ybus, model, kinds, &state);
        let lu = jac.lu();
        let step = lu
            .solve(&g)
            .ok_or(SolveError::JacobianSingular)?;

        for i in 0..kinds.len() {
            if let Some(col) = idx.theta_pos[i] {
                state.theta[i] -= step[col];
            }
            if let Some(col) = idx.v_pos[i] {
                state.v[i] -= step[col];
            }
        }
        // Negative magnitudes have left the physical region; report
        // divergence rather than pressing on with meaningless values.
        if state.v.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(SolveError::AlgebraicDivergence {
                iterations: iter,
                max_mismatch: max_mis,
            });
        }

        g = mismatch(ybus, model, kinds, &state);
        max_mis = g.amax();
        if !max_mis.is_finite() {
            return Err(SolveError::AlgebraicDivergence {
                iterations: iter,
                max_mismatch: max_mis,
            });
        }
        if max_mis <= opts.tol {
            return Ok(state);
        }
    }
    Err(SolveError::AlgebraicDivergence {
        iterations: opts.max_iter,
        max_mismatch: max_mis,
    })
}

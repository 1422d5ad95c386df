//! Static network model: buses, branches, admittance assembly, and the
//! per-unit algebraic state solved by the Newton iteration in [`newton`].

pub mod newton;

use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

pub type Complex64 = Complex<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusType {
    Slack,
    Pv,
    Pq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: u32,
    #[serde(rename = "type")]
    pub bus_type: BusType,
    /// Voltage setpoint (p.u.) for slack and PV buses.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_set: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from: u32,
    pub to: u32,
    /// Series resistance (p.u.).
    pub r: f64,
    /// Series reactance (p.u.).
    pub x: f64,
    /// Total charging susceptance (p.u.), split half per end.
    #[serde(default)]
    pub b: f64,
    /// Off-nominal tap ratio on the `from` side.
    #[serde(default = "default_tap")]
    pub tap: f64,
}

fn default_tap() -> f64 {
    1.0
}

/// Static network description; immutable once validated, shared across trials.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkCase {
    pub name: String,
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    index: HashMap<u32, usize>,
}

impl NetworkCase {
    pub fn new(name: String, base_mva: f64, buses: Vec<Bus>, branches: Vec<Branch>) -> Self {
        let index = buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect();
        Self {
            name,
            base_mva,
            buses,
            branches,
            index,
        }
    }

    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    /// Internal index of a bus id, if present.
    pub fn bus_index(&self, id: u32) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn slack_index(&self) -> usize {
        self.buses
            .iter()
            .position(|b| b.bus_type == BusType::Slack)
            .expect("validated case has exactly one slack bus")
    }

    /// True if every bus is reachable from the first over branches.
    pub fn is_connected(&self) -> bool {
        if self.buses.is_empty() {
            return false;
        }
        let mut adj = vec![Vec::new(); self.buses.len()];
        for br in &self.branches {
            if let (Some(f), Some(t)) = (self.bus_index(br.from), self.bus_index(br.to)) {
                adj[f].push(t);
                adj[t].push(f);
            }
        }
        let mut seen = vec![false; self.buses.len()];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for &j in &adj[i] {
                if !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

/// Per-bus voltage magnitudes and angles (p.u., rad). Slack angle is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgebraicState {
    pub v: Vec<f64>,
    pub theta: Vec<f64>,
}

impl AlgebraicState {
    /// Flat start: unity magnitude everywhere except declared setpoints.
    pub fn flat(case: &NetworkCase) -> Self {
        let v = case
            .buses
            .iter()
            .map(|b| b.v_set.unwrap_or(1.0))
            .collect();
        Self {
            v,
            theta: vec![0.0; case.n_buses()],
        }
    }
}

/// Bus admittance matrix for the case with the given per-branch tap ratios.
///
/// Standard pi-model assembly: series admittance plus half the charging
/// at each end; off-nominal taps on the `from` side.
pub fn build_admittance(case: &NetworkCase, taps: &[f64]) -> DMatrix<Complex64> {
    assert_eq!(taps.len(), case.branches.len());
    let n = case.n_buses();
    let mut y = DMatrix::<Complex64>::zeros(n, n);
    for (br, &tap) in case.branches.iter().zip(taps) {
        let f = case.bus_index(br.from).expect("branch endpoints validated");
        let t = case.bus_index(br.to).expect("branch endpoints validated");
        let ys = Complex64::new(1.0, 0.0) / Complex64::new(br.r, br.x);
        let shunt = Complex64::new(0.0, br.b / 2.0);
        let a2 = tap * tap;
        y[(f, f)] += (ys + shunt) / a2;
        y[(t, t)] += ys + shunt;
        y[(f, t)] -= ys / tap;
        y[(t, f)] -= ys / tap;
    }
    y
}

/// Admittance built with the taps recorded in the case file.
pub fn build_admittance_base(case: &NetworkCase) -> DMatrix<Complex64> {
    let taps: Vec<f64> = case.branches.iter().map(|b| b.tap).collect();
    build_admittance(case, &taps)
}

/// Net complex power flowing into the network at every bus (p.u.),
/// `S_i = V_i * conj(sum_j Y_ij V_j)`.
pub fn calc_injections(
    ybus: &DMatrix<Complex64>,
    state: &AlgebraicState,
) -> (Vec<f64>, Vec<f64>) {
    let n = state.v.len();
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    for i in 0..n {
        let mut sum = Complex64::new(0.0, 0.0);
        for j in 0..n {
            let y = ybus[(i, j)];
            if y.norm_sqr() == 0.0 {
                continue;
            }
            let vj = Complex64::from_polar(state.v[j], state.theta[j]);
            sum += y * vj;
        }
        let vi = Complex64::from_polar(state.v[i], state.theta[i]);
        let s = vi * sum.conj();
        p[i] = s.re;
        q[i] = s.im;
    }
    (p, q)
}

/// Series (I^2 R, I^2 X) losses summed over all branches (p.u.).
pub fn series_losses(
    case: &NetworkCase,
    taps: &[f64],
    state: &AlgebraicState,
) -> (f64, f64) {
    let mut p_loss = 0.0;
    let mut q_loss = 0.0;
    for (br, &tap) in case.branches.iter().zip(taps) {
        let f = case.bus_index(br.from).unwrap();
        let t = case.bus_index(br.to).unwrap();
        let vf = Complex64::from_polar(state.v[f], state.theta[f]) / tap;
        let vt = Complex64::from_polar(state.v[t], state.theta[t]);
        let ys = Complex64::new(1.0, 0.0) / Complex64::new(br.r, br.x);
        let i = (vf - vt) * ys;
        let i2 = i.norm_sqr();
        p_loss += i2 * br.r;
        q_loss += i2 * br.x;
    }
    (p_loss, q_loss)
}

//! Exponential recovery load: power dips with voltage, then the internal
//! state recovers consumption toward the steady-state characteristic with
//! time constants `t_p`/`t_q`. One OU channel perturbs the nominal level.

use serde::{Deserialize, Serialize};

use crate::error::InputError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErlLoad {
    pub bus: u32,
    /// Nominal active power (MW).
    pub p0: f64,
    /// Nominal reactive power (MVAr).
    pub q0: f64,
    /// Active recovery time constant (s).
    pub t_p: f64,
    /// Reactive recovery time constant (s).
    pub t_q: f64,
    /// Steady-state / transient voltage exponents. The defaults are the
    /// standard parameterization: constant steady-state power, impedance
    /// transient.
    #[serde(default)]
    pub alpha_s: f64,
    #[serde(default = "default_transient_exp")]
    pub alpha_t: f64,
    #[serde(default)]
    pub beta_s: f64,
    #[serde(default = "default_transient_exp")]
    pub beta_t: f64,
    /// Nominal voltage (p.u.).
    #[serde(default = "default_v0")]
    pub v0: f64,
    /// OU channel bound by the scenario; None runs the load noise-free.
    #[serde(skip)]
    pub noise_channel: Option<usize>,
}

fn default_transient_exp() -> f64 {
    2.0
}

fn default_v0() -> f64 {
    1.0
}

/// Dynamic state of one ERL (MW.s / MVAr.s).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ErlState {
    pub x_p: f64,
    pub x_q: f64,
}

/// Noise-shifted load levels. The active and reactive levels share the same
/// channel value, and both are floored at zero so extreme negative
/// excursions cannot turn the load into a generator; the flag reports
/// whether the floor engaged.
pub fn noise_levels(load: &ErlLoad, eta: f64) -> (f64, f64, bool) {
    let p_raw = load.p0 + eta;
    let q_raw = load.q0 + eta;
    let floored = p_raw < 0.0 || q_raw < 0.0;
    (p_raw.max(0.0), q_raw.max(0.0), floored)
}

fn check_voltage(v: f64) -> Result<(), InputError> {
    if v > 0.0 {
        Ok(())
    } else {
        Err(InputError::NonPositiveVoltage(v))
    }
}

/// State derivatives `(dx_p/dt, dx_q/dt)` at the given bus voltage.
pub fn erl_derivatives(
    load: &ErlLoad,
    state: &ErlState,
    v: f64,
    eta: f64,
) -> Result<(f64, f64), InputError> {
    check_voltage(v)?;
    let (p_level, q_level, _) = noise_levels(load, eta);
    let vr = v / load.v0;
    let p_s = p_level * vr.powf(load.alpha_s);
    let p_t = p_level * vr.powf(load.alpha_t);
    let q_s = q_level * vr.powf(load.beta_s);
    let q_t = q_level * vr.powf(load.beta_t);
    Ok((
        -state.x_p / load.t_p + p_s - p_t,
        -state.x_q / load.t_q + q_s - q_t,
    ))
}

/// Consumed power `(p, q)` in MW/MVAr; this is the expression the network
/// mismatch equations withdraw at the bus.
pub fn erl_power(
    load: &ErlLoad,
    state: &ErlState,
    v: f64,
    eta: f64,
) -> Result<(f64, f64), InputError> {
    check_voltage(v)?;
    let (p_level, q_level, _) = noise_levels(load, eta);
    let vr = v / load.v0;
    Ok((
        state.x_p / load.t_p + p_level * vr.powf(load.alpha_t),
        state.x_q / load.t_q + q_level * vr.powf(load.beta_t),
    ))
}

/// Voltage sensitivity of the consumed power (MW per p.u. volt).
pub fn erl_power_dv(load: &ErlLoad, v: f64, eta: f64) -> (f64, f64) {
    let (p_level, q_level, _) = noise_levels(load, eta);
    let vr = v / load.v0;
    (
        p_level * load.alpha_t * vr.powf(load.alpha_t - 1.0) / load.v0,
        q_level * load.beta_t * vr.powf(load.beta_t - 1.0) / load.v0,
    )
}

/// State that makes the derivatives vanish at the given operating point,
/// i.e. consumption equals the steady-state characteristic.
pub fn erl_equilibrium_state(load: &ErlLoad, v: f64, eta: f64) -> ErlState {
    let (p_level, q_level, _) = noise_levels(load, eta);
    let vr = v / load.v0;
    ErlState {
        x_p: load.t_p * p_level * (vr.powf(load.alpha_s) - vr.powf(load.alpha_t)),
        x_q: load.t_q * q_level * (vr.powf(load.beta_s) - vr.powf(load.beta_t)),
    }
}

//! Voltage-dependent load whose scaling factor grows linearly with time;
//! this is the slowly changing parameter that drives the system toward the
//! loadability nose.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RampLoad {
    pub bus: u32,
    /// Nominal active power (MW); the margin is reported in multiples of it.
    pub p0: f64,
    /// Nominal reactive power (MVAr).
    pub q0: f64,
    /// Scaling-factor growth rate (1/s).
    pub rate: f64,
    /// Voltage exponents; zero means constant power.
    #[serde(default)]
    pub alpha_p: f64,
    #[serde(default)]
    pub alpha_q: f64,
    #[serde(default = "default_v0")]
    pub v0: f64,
    /// Initial scaling offset; the ramp starts from `p0 (1 + z0)`.
    #[serde(default)]
    pub z0: f64,
}

fn default_v0() -> f64 {
    1.0
}

impl RampLoad {
    /// Scaling factor at time `t`, derived from `t` rather than integrated
    /// so it cannot drift.
    pub fn scale_at(&self, t: f64) -> f64 {
        self.z0 + self.rate * t
    }
}

/// Consumed `(P, Q)` in MW/MVAr at time `t` and bus voltage `v`.
pub fn ramp_power(load: &RampLoad, v: f64, t: f64) -> (f64, f64) {
    debug_assert!(t >= 0.0);
    let z = load.scale_at(t);
    let vr = v / load.v0;
    (
        load.p0 * (1.0 + z) * vr.powf(load.alpha_p),
        load.q0 * (1.0 + z) * vr.powf(load.alpha_q),
    )
}

/// Voltage sensitivity of the consumed power (MW per p.u. volt).
pub fn ramp_power_dv(load: &RampLoad, v: f64, t: f64) -> (f64, f64) {
    let z = load.scale_at(t);
    let vr = v / load.v0;
    (
        load.p0 * (1.0 + z) * load.alpha_p * vr.powf(load.alpha_p - 1.0) / load.v0,
        load.q0 * (1.0 + z) * load.alpha_q * vr.powf(load.alpha_q - 1.0) / load.v0,
    )
}

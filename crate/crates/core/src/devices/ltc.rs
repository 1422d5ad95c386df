//! Continuous load tap changer with initial/subsequent action delays.
//!
//! Outside the deadband a violation timer accrues; once it exceeds the
//! pending delay the tap slews at a fixed rate toward restoring the
//! controlled voltage, clamped to its range. Re-entering the band resets
//! the timer, and later violations only wait the (shorter) subsequent
//! delay. The tap is assumed to sit on the `from` side of its branch with
//! the controlled bus on the `to` side, so lowering the ratio raises the
//! controlled voltage.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ltc {
    pub controlled_bus: u32,
    /// Index of the tapped branch in the case branch list.
    pub branch: usize,
    /// Target voltage (p.u.).
    pub v_ref: f64,
    /// Half-width of the no-action band (p.u.).
    pub deadband: f64,
    pub tap_min: f64,
    pub tap_max: f64,
    /// Wait before the first corrective action (s).
    pub initial_delay: f64,
    /// Wait before re-engaging after the band was re-entered (s).
    pub subsequent_delay: f64,
    /// Slew rate of the ratio while correcting (1/s).
    pub tap_rate: f64,
}

/// Mutable LTC state carried in the trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LtcState {
    pub tap: f64,
    pub timer: f64,
    pub has_acted: bool,
}

impl LtcState {
    pub fn new(tap: f64) -> Self {
        Self {
            tap,
            timer: 0.0,
            has_acted: false,
        }
    }
}

/// Advances the LTC by `dt` given the solved controlled-bus voltage.
/// Returns the new state; the caller rebuilds the admittance matrix when
/// the tap actually moved.
pub fn ltc_step(ltc: &Ltc, state: &LtcState, v_controlled: f64, dt: f64) -> LtcState {
    debug_assert!(dt > 0.0);
    let mut next = *state;
    let error = v_controlled - ltc.v_ref;
    if error.abs() <= ltc.deadband {
        next.timer = 0.0;
        return next;
    }
    next.timer += dt;
    let pending = if state.has_acted {
        ltc.subsequent_delay
    } else {
        ltc.initial_delay
    };
    if next.timer >= pending {
        // Low voltage: lower the ratio to raise the to-side bus.
        let direction = if error < 0.0 { -1.0 } else { 1.0 };
        next.tap = (state.tap + direction * ltc.tap_rate * dt).clamp(ltc.tap_min, ltc.tap_max);
        if next.tap != state.tap {
            next.has_acted = true;
        }
    }
    next
}

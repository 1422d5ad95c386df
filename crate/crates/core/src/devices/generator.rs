//! Voltage-regulating source with hard reactive limits. Hitting a limit
//! drops the machine to fixed-Q operation, which is the mechanism that
//! erodes loadability as the system is stressed; by default the switch is
//! irreversible within a trial, mirroring over-excitation limiter behavior.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorKind {
    Slack,
    PvWithQlimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LimitSide {
    Max,
    Min,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub bus: u32,
    pub kind: GeneratorKind,
    /// Voltage setpoint (p.u.) while regulating.
    pub v_set: f64,
    /// Scheduled active power (MW); ignored for the slack machine.
    #[serde(default)]
    pub p_mw: f64,
    /// Reactive capability (MVAr).
    pub q_min: f64,
    pub q_max: f64,
    /// Present limit state; None while regulating voltage.
    #[serde(skip)]
    pub limited: Option<LimitSide>,
}

impl Generator {
    pub fn is_limited(&self) -> bool {
        self.limited.is_some()
    }

    /// Fixed reactive output while limited (MVAr).
    pub fn q_fixed(&self) -> Option<f64> {
        self.limited.map(|side| match side {
            LimitSide::Max => self.q_max,
            LimitSide::Min => self.q_min,
        })
    }
}

/// Applies the reactive-limit logic given the reactive output the solved
/// network requires from this machine.
///
/// A regulating generator that would need more than `q_max` (or less than
/// `q_min`) switches to fixed-Q at the violated limit and stops regulating
/// voltage. When `reversible` is set, a limited machine re-engages once the
/// solved bus voltage rises back above its setpoint (falls below, for a
/// min-limited machine); the default in studies is irreversible.
pub fn generator_q_update(
    gen: &Generator,
    q_required: f64,
    v_bus: f64,
    reversible: bool,
) -> Generator {
    let mut out = gen.clone();
    if gen.kind == GeneratorKind::Slack {
        return out;
    }
    match gen.limited {
        None => {
            if q_required > gen.q_max {
                out.limited = Some(LimitSide::Max);
            } else if q_required < gen.q_min {
                out.limited = Some(LimitSide::Min);
            }
        }
        Some(LimitSide::Max) => {
            if reversible && v_bus > gen.v_set {
                out.limited = None;
            }
        }
        Some(LimitSide::Min) => {
            if reversible && v_bus < gen.v_set {
                out.limited = None;
            }
        }
    }
    out
}

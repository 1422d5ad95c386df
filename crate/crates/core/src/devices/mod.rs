//! Bus-attached component models: recovery loads, the time-ramped load,
//! voltage-regulating generators with reactive limits, tap changers, and
//! renewable injections.

pub mod erl;
pub mod generator;
pub mod ltc;
pub mod ramp;
pub mod renewable;

pub use erl::{ErlLoad, ErlState};
pub use generator::{Generator, GeneratorKind, LimitSide};
pub use ltc::{Ltc, LtcState};
pub use ramp::RampLoad;
pub use renewable::{RenewableInjection, RenewableKind};

use serde::{Deserialize, Serialize};

/// Constant-power background load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticLoad {
    pub bus: u32,
    pub p_mw: f64,
    pub q_mvar: f64,
}

/// Every device attached to a case, grouped by model.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceSet {
    pub erl_loads: Vec<ErlLoad>,
    pub ramp: RampLoad,
    pub static_loads: Vec<StaticLoad>,
    pub generators: Vec<Generator>,
    pub ltcs: Vec<Ltc>,
    pub renewables: Vec<RenewableInjection>,
}

//! Renewable injections: a wind farm driven by the Weibull speed process
//! and a PV plant driven by the Beta irradiance process, both injecting at
//! a constant power factor.

use serde::{Deserialize, Serialize};

use crate::error::InputError;
use crate::stochastic::power::{pv_power, wind_power, PvCurveParams, WindPowerCurve};
use crate::stochastic::transform::{BetaParams, WeibullParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RenewableKind {
    Wind {
        curve: WindPowerCurve,
        weibull: WeibullParams,
    },
    Solar {
        pv: PvCurveParams,
        beta: BetaParams,
        /// Scale from the unit irradiance fraction to W/m^2.
        irradiance_max: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenewableInjection {
    pub bus: u32,
    #[serde(flatten)]
    pub kind: RenewableKind,
    /// Operating power factor; reactive output follows the active output.
    pub power_factor: f64,
    /// OU channel bound by the scenario; None freezes the process at its
    /// median value.
    #[serde(skip)]
    pub noise_channel: Option<usize>,
}

/// Injected `(P, Q)` in MW/MVAr, generation positive, for the current
/// process value (wind speed in m/s, or irradiance in W/m^2).
pub fn renewable_power(
    inj: &RenewableInjection,
    process_value: f64,
) -> Result<(f64, f64), InputError> {
    let p = match &inj.kind {
        RenewableKind::Wind { curve, .. } => wind_power(process_value, curve),
        RenewableKind::Solar { pv, .. } => pv_power(process_value, pv)?,
    };
    let q = p * inj.power_factor.acos().tan();
    Ok((p, q))
}

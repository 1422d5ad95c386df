//! Conversion of process values to injected active power: the piecewise
//! PV irradiance curve and a cubic wind-turbine power curve.

use serde::{Deserialize, Serialize};

use crate::error::InputError;

/// Piecewise irradiance-to-power curve of a PV installation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PvCurveParams {
    /// Threshold irradiance below which output grows quadratically (W/m^2).
    pub r_c: f64,
    /// Standard irradiance at which rated output is reached (W/m^2).
    pub r_std: f64,
    /// Rated capacity (MW).
    pub p_rated: f64,
}

/// PV active power (MW) for irradiance `s` (W/m^2).
///
/// Quadratic below `r_c`, linear between `r_c` and `r_std`, flat at rated
/// above; continuous and nondecreasing over the whole range.
pub fn pv_power(s: f64, params: &PvCurveParams) -> Result<f64, InputError> {
    if s < 0.0 {
        return Err(InputError::NegativeIrradiance(s));
    }
    debug_assert!(params.r_c > 0.0 && params.r_c < params.r_std && params.p_rated > 0.0);
    Ok(if s < params.r_c {
        s * s * params.p_rated / (params.r_c * params.r_std)
    } else if s < params.r_std {
        s * params.p_rated / params.r_std
    } else {
        params.p_rated
    })
}

/// Cubic wind-turbine power curve with cut-in, rated and cut-out speeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindPowerCurve {
    /// Cut-in speed (m/s).
    pub cut_in: f64,
    /// Rated speed (m/s).
    pub rated: f64,
    /// Cut-out speed (m/s).
    pub cut_out: f64,
    /// Rated capacity (MW).
    pub p_rated: f64,
}

impl Default for WindPowerCurve {
    fn default() -> Self {
        Self {
            cut_in: 3.0,
            rated: 12.0,
            cut_out: 25.0,
            p_rated: 1.0,
        }
    }
}

/// Wind-farm active power (MW) for hub-height wind speed `w` (m/s).
pub fn wind_power(w: f64, curve: &WindPowerCurve) -> f64 {
    debug_assert!(w >= 0.0);
    if w < curve.cut_in || w > curve.cut_out {
        0.0
    } else if w < curve.rated {
        let ci3 = curve.cut_in.powi(3);
        curve.p_rated * (w.powi(3) - ci3) / (curve.rated.powi(3) - ci3)
    } else {
        curve.p_rated
    }
}

//! Memoryless transforms: mapping an OU channel through the Gaussian CDF
//! and an inverse target CDF yields an autocorrelated process with the
//! target marginal (Weibull wind speed, Beta solar irradiance).

use serde::{Deserialize, Serialize};

use super::special::{inverse_beta_reg, std_normal_cdf, std_normal_sf};
use super::OuParams;
use crate::error::NumericsError;

/// Tail clamp for the uniform variate before inversion, so extreme Gaussian
/// excursions cannot produce infinities.
const TAIL_EPS: f64 = 1e-15;

/// Weibull marginal for the wind-speed process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeibullParams {
    /// Scale (m/s).
    pub lambda: f64,
    /// Shape (dimensionless).
    pub k: f64,
    /// Autocorrelation decay rate of the wind process (1/s).
    pub alpha_w: f64,
}

impl WeibullParams {
    /// Mean of the marginal, `lambda * Gamma(1 + 1/k)`.
    pub fn mean(&self) -> f64 {
        self.lambda * super::special::gamma(1.0 + 1.0 / self.k)
    }

    /// Variance of the marginal, `lambda^2 Gamma(1 + 2/k) - mean^2`.
    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.lambda * self.lambda * super::special::gamma(1.0 + 2.0 / self.k) - m * m
    }
}

/// Beta marginal for the solar-irradiance process (as a fraction in [0, 1]).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaParams {
    pub p: f64,
    pub q: f64,
    /// Autocorrelation decay rate of the irradiance process (1/s).
    pub alpha_s: f64,
}

impl BetaParams {
    /// Mean of the marginal, `p / (p + q)`.
    pub fn mean(&self) -> f64 {
        self.p / (self.p + self.q)
    }

    /// Variance of the marginal, `pq / ((p+q)^2 (p+q+1))`.
    pub fn variance(&self) -> f64 {
        let s = self.p + self.q;
        self.p * self.q / (s * s * (s + 1.0))
    }
}

/// Normalizes an OU value by its sigma=1 stationary deviation
/// `beta / sqrt(2 alpha)`, the scaling the transforms expect.
fn normalize(eta: f64, ou: &OuParams) -> f64 {
    debug_assert!(ou.beta > 0.0);
    eta / (ou.beta / (2.0 * ou.alpha).sqrt())
}

/// Maps an OU value to a Weibull-distributed wind speed (m/s).
///
/// `F_w^{-1}(Phi(eta_norm))` with the closed-form Weibull inverse
/// `lambda * (-ln(1 - u))^{1/k}`; the uniform variate is clamped to
/// `[eps, 1 - eps]` so the output stays finite for any finite input.
pub fn weibull_transform(eta: f64, params: &WeibullParams, ou: &OuParams) -> f64 {
    let z = normalize(eta, ou);
    // 1 - u computed as the upper tail directly to avoid cancellation.
    let one_minus_u = std_normal_sf(z).clamp(TAIL_EPS, 1.0 - TAIL_EPS);
    params.lambda * (-one_minus_u.ln()).powf(1.0 / params.k)
}

/// Maps an OU value to a Beta-distributed irradiance fraction in [0, 1].
pub fn beta_transform(eta: f64, params: &BetaParams, ou: &OuParams) -> Result<f64, NumericsError> {
    let z = normalize(eta, ou);
    let u = std_normal_cdf(z).clamp(TAIL_EPS, 1.0 - TAIL_EPS);
    inverse_beta_reg(params.p, params.q, u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stochastic::special::beta_reg;
    use crate::stochastic::{channel_stream, ou_init, ou_step, OuScheme};

    fn unit_ou(alpha: f64) -> OuParams {
        OuParams::new(alpha, (2.0 * alpha).sqrt(), 1.0)
    }

    #[test]
    fn weibull_at_median_input() {
        // Phi(0) = 0.5, so the output is the Weibull median lambda*(ln 2)^(1/k).
        let params = WeibullParams {
            lambda: 3.36,
            k: 1.51,
            alpha_w: 0.2575 / 3600.0,
        };
        let ou = unit_ou(params.alpha_w);
        let w = weibull_transform(0.0, &params, &ou);
        let expected = 3.36 * (2.0_f64.ln()).powf(1.0 / 1.51);
        assert!((w - expected).abs() < 1e-12);
        assert!((w - 2.6359).abs() < 1e-3);
    }

    #[test]
    fn weibull_trajectory_moments() {
        let params = WeibullParams {
            lambda: 3.36,
            k: 1.51,
            alpha_w: 0.2575 / 3600.0,
        };
        let ou = unit_ou(params.alpha_w);
        // Exact discretization lets the trajectory cover many correlation
        // times of this very slow process.
        let dt = 400.0;
        let n = 400_000;
        let mut state = ou_init(&ou, channel_stream(101, 0, 0));
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            ou_step(&mut state, &ou, dt, OuScheme::ExactOu);
            let w = weibull_transform(state.value, &params, &ou);
            assert!(w > 0.0);
            sum += w;
            sum_sq += w * w;
        }
        let mean = sum / n as f64;
        let var = sum_sq / n as f64 - mean * mean;
        assert!(
            (mean - params.mean()).abs() < 0.03 * params.mean(),
            "wind mean {mean} vs {}",
            params.mean()
        );
        assert!(
            (var - params.variance()).abs() < 0.05 * params.variance(),
            "wind variance {var} vs {}",
            params.variance()
        );
    }

    #[test]
    fn beta_uniform_special_case() {
        let params = BetaParams {
            p: 1.0,
            q: 1.0,
            alpha_s: 0.1,
        };
        let ou = unit_ou(0.1);
        let s = beta_transform(0.0, &params, &ou).unwrap();
        assert!((s - 0.5).abs() < 1e-10);
    }

    #[test]
    fn beta_trajectory_moments() {
        let params = BetaParams {
            p: 1.11,
            q: 0.73,
            alpha_s: 0.2231 / 3600.0,
        };
        let ou = unit_ou(params.alpha_s);
        let dt = 500.0;
        let n = 200_000;
        let mut state = ou_init(&ou, channel_stream(55, 0, 0));
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            ou_step(&mut state, &ou, dt, OuScheme::ExactOu);
            let s = beta_transform(state.value, &params, &ou).unwrap();
            assert!((0.0..=1.0).contains(&s));
            sum += s;
            sum_sq += s * s;
        }
        let mean = sum / n as f64;
        let var = sum_sq / n as f64 - mean * mean;
        assert!(
            (mean - params.mean()).abs() < 0.03 * params.mean(),
            "solar mean {mean} vs {}",
            params.mean()
        );
        assert!(
            (var - params.variance()).abs() < 0.05 * params.variance(),
            "solar variance {var} vs {}",
            params.variance()
        );
    }

    #[test]
    fn transforms_are_monotone_in_eta() {
        let wp = WeibullParams {
            lambda: 3.36,
            k: 1.51,
            alpha_w: 0.2,
        };
        let bp = BetaParams {
            p: 1.11,
            q: 0.73,
            alpha_s: 0.2,
        };
        let ou = unit_ou(0.2);
        let mut last_w = f64::NEG_INFINITY;
        let mut last_s = f64::NEG_INFINITY;
        for i in -60..=60 {
            let eta = i as f64 / 10.0;
            let w = weibull_transform(eta, &wp, &ou);
            let s = beta_transform(eta, &bp, &ou).unwrap();
            assert!(w >= last_w, "wind transform must be nondecreasing");
            assert!(s >= last_s, "solar transform must be nondecreasing");
            last_w = w;
            last_s = s;
        }
    }

    #[test]
    fn beta_round_trip_recovers_gaussian_cdf() {
        let params = BetaParams {
            p: 1.11,
            q: 0.73,
            alpha_s: 0.3,
        };
        let ou = unit_ou(0.3);
        for i in -50..=50 {
            let eta = i as f64 / 10.0;
            let s = beta_transform(eta, &params, &ou).unwrap();
            let u = std_normal_cdf(eta / (ou.beta / (2.0 * ou.alpha).sqrt()));
            assert!(
                (beta_reg(params.p, params.q, s) - u).abs() < 1e-8,
                "round trip at eta={eta}"
            );
        }
    }
}

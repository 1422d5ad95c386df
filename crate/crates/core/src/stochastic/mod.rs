//! Correlated noise channels and the distribution-shaped processes built
//! on top of them: Ornstein-Uhlenbeck channels, autocorrelated Weibull
//! wind speed, autocorrelated Beta solar irradiance, and the
//! speed/irradiance-to-power curves.

pub mod power;
pub mod special;
pub mod transform;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Parameters of one Ornstein-Uhlenbeck noise channel.
///
/// The channel relaxes toward zero at rate `alpha` and is driven with
/// intensity `sigma * beta`, giving a stationary variance of
/// `(sigma * beta)^2 / (2 alpha)` and autocorrelation `exp(-alpha |dt|)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuParams {
    /// Mean-reversion rate (1/s). Must be positive.
    pub alpha: f64,
    /// Relative strength of this channel. Non-negative.
    pub beta: f64,
    /// Noise intensity. Non-negative; zero turns the channel off.
    pub sigma: f64,
}

impl OuParams {
    pub fn new(alpha: f64, beta: f64, sigma: f64) -> Self {
        assert!(alpha > 0.0, "alpha must be positive");
        assert!(beta >= 0.0, "beta must be non-negative");
        assert!(sigma >= 0.0, "sigma must be non-negative");
        Self { alpha, beta, sigma }
    }

    /// Stationary standard deviation `sigma * beta / sqrt(2 alpha)`.
    pub fn stationary_std(&self) -> f64 {
        self.sigma * self.beta / (2.0 * self.alpha).sqrt()
    }
}

/// Update rule used to advance an OU channel by one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum OuScheme {
    /// Explicit Euler-Maruyama, the reference integration method here.
    #[default]
    EulerMaruyama,
    /// Exact discretization of the OU transition density; unconditionally
    /// stable for stiff `alpha`, usable at any step size.
    ExactOu,
}

/// One noise channel: current value plus its private random stream.
///
/// Each channel owns a counter-based stream keyed by (base seed, stream id),
/// so trials and channels reproduce independently of scheduling order.
#[derive(Debug, Clone)]
pub struct OuState {
    pub value: f64,
    rng: ChaCha8Rng,
}

/// Derives the random stream for a (trial, channel) pair.
pub fn channel_stream(base_seed: u64, trial: u64, channel: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(trial.wrapping_mul(1 << 20).wrapping_add(channel));
    rng
}

/// Draws the stationary initial condition `N(0, (sigma beta)^2 / 2 alpha)`.
pub fn ou_init(params: &OuParams, rng: ChaCha8Rng) -> OuState {
    let mut state = OuState { value: 0.0, rng };
    let z: f64 = StandardNormal.sample(&mut state.rng);
    state.value = params.stationary_std() * z;
    state
}

/// Advances the channel by `dt` seconds.
pub fn ou_step(state: &mut OuState, params: &OuParams, dt: f64, scheme: OuScheme) {
    debug_assert!(dt > 0.0);
    let z: f64 = StandardNormal.sample(&mut state.rng);
    match scheme {
        OuScheme::EulerMaruyama => {
            state.value += -params.alpha * state.value * dt
                + params.sigma * params.beta * dt.sqrt() * z;
        }
        OuScheme::ExactOu => {
            let decay = (-params.alpha * dt).exp();
            let diffusion = params.sigma
                * params.beta
                * ((1.0 - (-2.0 * params.alpha * dt).exp()) / (2.0 * params.alpha)).sqrt();
            state.value = state.value * decay + diffusion * z;
        }
    }
}

//! Differential-privacy primitives: the Gaussian mechanism and its analytic
//! calibration, Rényi accounting for subsampled Gaussian steps, the noisy
//! topic histogram, per-example clipping with noisy aggregation, and the
//! AdamW update used by DP-Adam.

mod accountant;
mod adam;
mod clip;
mod gaussian;
mod histogram;
mod rdp;

pub use accountant::{
    compose_and_convert, delta_for, solve_noise_multiplier, solve_noise_multiplier_with,
    Accountant, AccountantLedger, MechanismEvent, RdpAccountant,
};
pub use adam::{adam_step, AdamConfig, AdamState, LrSchedule};
pub use clip::{clip_in_place, clip_per_example, dp_aggregate, l2_norm};
pub use gaussian::{
    calibrate_gaussian_sigma, gaussian_delta, gaussian_epsilon, log_erfc, normal_cdf,
};
pub use histogram::{noise_histogram, normalise_clamped, NoisyHistogram};
pub use rdp::{default_orders, rdp_gaussian, rdp_subsampled_gaussian, rdp_to_epsilon};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An (ε, δ) guarantee.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    pub epsilon: f64,
    pub delta: f64,
}

impl PrivacyBudget {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::invalid(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::invalid(format!(
                "delta must lie in (0, 1), got {delta}"
            )));
        }
        Ok(Self { epsilon, delta })
    }
}

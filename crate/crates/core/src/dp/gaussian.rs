//! Analytic calibration of the Gaussian mechanism.
//!
//! A Gaussian release with noise `sigma` of a statistic with L2 sensitivity
//! `sensitivity` is (ε, δ)-DP exactly when
//!
//! ```text
//! Φ(Δ/(2σ) − εσ/Δ) − e^ε · Φ(−Δ/(2σ) − εσ/Δ) ≤ δ
//! ```
//!
//! The left-hand side is strictly decreasing in ε, so the smallest valid ε is
//! found by bisection.

use statrs::function::erf::erfc;

use crate::error::{Error, Result};

const EPS_TOLERANCE: f64 = 1e-9;

/// Natural log of `erfc(x)`, stable far into the upper tail.
pub fn log_erfc(x: f64) -> f64 {
    if x < 25.0 {
        return erfc(x).ln();
    }
    // Asymptotic expansion; relative error < 1e-12 for x >= 25.
    let x2 = x * x;
    let inv = 1.0 / x2;
    let series = 1.0 - 0.5 * inv + 0.75 * inv * inv - 1.875 * inv * inv * inv;
    -x2 - (x * std::f64::consts::PI.sqrt()).ln() + series.ln()
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Natural log of the standard normal CDF.
pub fn log_normal_cdf(x: f64) -> f64 {
    log_erfc(-x / std::f64::consts::SQRT_2) - std::f64::consts::LN_2
}

/// The δ achieved by the Gaussian mechanism at privacy level `epsilon`.
pub fn gaussian_delta(sigma: f64, sensitivity: f64, epsilon: f64) -> f64 {
    let a = sensitivity / (2.0 * sigma);
    let b = epsilon * sigma / sensitivity;
    let first = normal_cdf(a - b);
    let second = (epsilon + log_normal_cdf(-a - b)).exp();
    (first - second).max(0.0)
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!(
            "delta must lie in (0, 1), got {delta}"
        )));
    }
    Ok(())
}

/// Smallest ε for which a Gaussian release is (ε, δ)-DP.
///
/// `sigma == 0` means no noise at all and yields `f64::INFINITY`.
pub fn gaussian_epsilon(sigma: f64, sensitivity: f64, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    if !(sensitivity > 0.0) {
        return Err(Error::invalid("sensitivity must be positive"));
    }
    if !(sigma >= 0.0) {
        return Err(Error::invalid("sigma must be non-negative"));
    }
    if sigma == 0.0 {
        return Ok(f64::INFINITY);
    }
    if gaussian_delta(sigma, sensitivity, 0.0) <= delta {
        return Ok(0.0);
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while gaussian_delta(sigma, sensitivity, hi) > delta {
        lo = hi;
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::numeric("analytic Gaussian epsilon did not bracket"));
        }
    }
    while hi - lo > EPS_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        if gaussian_delta(sigma, sensitivity, mid) > delta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// Inverse of [`gaussian_epsilon`]: the noise scale that spends exactly
/// `epsilon` at the given δ.
pub fn calibrate_gaussian_sigma(epsilon: f64, sensitivity: f64, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::invalid("epsilon must be positive and finite"));
    }
    if !(sensitivity > 0.0) {
        return Err(Error::invalid("sensitivity must be positive"));
    }
    // δ(ε) at fixed ε is decreasing in σ, so bisect on σ directly against
    // the δ target rather than nesting the ε bisection.
    let too_small = |sigma: f64| gaussian_delta(sigma, sensitivity, epsilon) > delta;
    let mut lo = 1e-6 * sensitivity;
    let mut hi = sensitivity;
    while too_small(hi) {
        lo = hi;
        hi *= 2.0;
        if hi > 1e9 * sensitivity {
            return Err(Error::numeric("Gaussian sigma calibration did not bracket"));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if too_small(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo) <= 1e-14 * hi {
            break;
        }
    }
    Ok(hi)
}

//! Rényi-DP curves for the (Poisson-subsampled) Gaussian mechanism and the
//! RDP → (ε, δ) conversion.

use crate::error::{Error, Result};

use super::gaussian::log_erfc;

/// Default Rényi orders: the fractional orders 1.25, 1.5 and 2.5, every
/// integer 2..=256, and the doublings 320, 640, 1280 of 1.25·2^k.
pub fn default_orders() -> Vec<f64> {
    let mut orders = vec![1.25, 1.5, 2.5];
    orders.extend((2..=256).map(f64::from));
    orders.extend([320.0, 640.0, 1280.0]);
    orders.sort_by(f64::total_cmp);
    orders.dedup();
    orders
}

fn log_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

fn log_sub(a: f64, b: f64) -> f64 {
    // Requires a >= b; rounding can push tiny differences negative.
    if b == f64::NEG_INFINITY {
        return a;
    }
    if b >= a {
        return f64::NEG_INFINITY;
    }
    a + (-(b - a).exp()).ln_1p()
}

fn ln_binomial(n: u64, k: u64) -> f64 {
    use statrs::function::gamma::ln_gamma;
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// `ln A_α` for integer α via the binomial expansion of
/// `E[(1 − q + q·e^{...})^α]`.
fn log_a_integer(q: f64, sigma: f64, alpha: u64) -> f64 {
    let log_q = q.ln();
    let log_1mq = (-q).ln_1p();
    let two_var = 2.0 * sigma * sigma;
    let mut acc = f64::NEG_INFINITY;
    for k in 0..=alpha {
        let kf = k as f64;
        let term = ln_binomial(alpha, k)
            + kf * log_q
            + (alpha - k) as f64 * log_1mq
            + (kf * kf - kf) / two_var;
        acc = log_add(acc, term);
    }
    acc
}

/// `ln A_α` for fractional α, summing the two one-sided series until their
/// terms fall below e^-30.
fn log_a_fractional(q: f64, sigma: f64, alpha: f64) -> f64 {
    let mut log_a0 = f64::NEG_INFINITY;
    let mut log_a1 = f64::NEG_INFINITY;
    let z0 = sigma * sigma * (1.0 / q - 1.0).ln() + 0.5;
    let log_q = q.ln();
    let log_1mq = (-q).ln_1p();
    let two_var = 2.0 * sigma * sigma;
    let half_ln = 0.5f64.ln();
    // Generalised binomial coefficient C(α, i), carried as (ln|c|, sign).
    let mut log_coef = 0.0f64;
    let mut positive = true;
    let mut i = 0u32;
    loop {
        let fi = f64::from(i);
        let j = alpha - fi;
        let log_t0 = log_coef + fi * log_q + j * log_1mq;
        let log_t1 = log_coef + j * log_q + fi * log_1mq;
        let log_e0 = half_ln + log_erfc((fi - z0) / (std::f64::consts::SQRT_2 * sigma));
        let log_e1 = half_ln + log_erfc((z0 - j) / (std::f64::consts::SQRT_2 * sigma));
        let log_s0 = log_t0 + (fi * fi - fi) / two_var + log_e0;
        let log_s1 = log_t1 + (j * j - j) / two_var + log_e1;
        if positive {
            log_a0 = log_add(log_a0, log_s0);
            log_a1 = log_add(log_a1, log_s1);
        } else {
            log_a0 = log_sub(log_a0, log_s0);
            log_a1 = log_sub(log_a1, log_s1);
        }
        i += 1;
        if log_s0.max(log_s1) < -30.0 || i > 100_000 {
            break;
        }
        let factor = (alpha - fi) / f64::from(i);
        if factor == 0.0 {
            break;
        }
        log_coef += factor.abs().ln();
        if factor < 0.0 {
            positive = !positive;
        }
    }
    log_add(log_a0, log_a1)
}

/// RDP curve of one step of the Gaussian mechanism with noise multiplier
/// `sigma` applied to a Poisson subsample at rate `q`.
pub fn rdp_subsampled_gaussian(sigma: f64, q: f64, orders: &[f64]) -> Result<Vec<f64>> {
    if !(q > 0.0) || q > 1.0 {
        return Err(Error::invalid(format!(
            "sampling rate must lie in (0, 1], got {q}"
        )));
    }
    if !(sigma >= 0.0) {
        return Err(Error::invalid("noise multiplier must be non-negative"));
    }
    if sigma == 0.0 {
        return Ok(vec![f64::INFINITY; orders.len()]);
    }
    orders
        .iter()
        .map(|&alpha| {
            if !(alpha > 1.0) {
                return Err(Error::invalid(format!(
                    "Rényi order must exceed 1, got {alpha}"
                )));
            }
            if q == 1.0 {
                return Ok(alpha / (2.0 * sigma * sigma));
            }
            let log_a = if alpha.fract() == 0.0 {
                log_a_integer(q, sigma, alpha as u64)
            } else {
                log_a_fractional(q, sigma, alpha)
            };
            Ok((log_a / (alpha - 1.0)).max(0.0))
        })
        .collect()
}

/// RDP curve of a single (non-subsampled) Gaussian release.
pub fn rdp_gaussian(sigma: f64, sensitivity: f64, orders: &[f64]) -> Vec<f64> {
    if sigma == 0.0 {
        return vec![f64::INFINITY; orders.len()];
    }
    let two_var = 2.0 * sigma * sigma;
    orders
        .iter()
        .map(|&a| a * sensitivity * sensitivity / two_var)
        .collect()
}

/// Converts an RDP curve to ε at the given δ, minimising over orders.
///
/// Uses the improved conversion
/// `ε = ε_RDP(α) + ln((α−1)/α) − (ln δ + ln α)/(α−1)`.
/// Returns the ε and the order that achieved it.
pub fn rdp_to_epsilon(orders: &[f64], rdp: &[f64], delta: f64) -> Result<(f64, f64)> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!(
            "delta must lie in (0, 1), got {delta}"
        )));
    }
    if orders.len() != rdp.len() || orders.is_empty() {
        return Err(Error::invalid("order grid and RDP curve lengths differ"));
    }
    let log_delta = delta.ln();
    let mut best = (f64::INFINITY, f64::NAN);
    for (&alpha, &r) in orders.iter().zip(rdp) {
        if !r.is_finite() {
            continue;
        }
        let eps = r + ((alpha - 1.0) / alpha).ln() - (log_delta + alpha.ln()) / (alpha - 1.0);
        let eps = eps.max(0.0);
        if eps < best.0 {
            best = (eps, alpha);
        }
    }
    Ok(best)
}

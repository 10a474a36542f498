use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::rdp::{default_orders, rdp_gaussian, rdp_subsampled_gaussian, rdp_to_epsilon};

/// One differentially private release recorded against a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MechanismEvent {
    /// A single Gaussian release; `sigma` in the units of the statistic.
    Gaussian { sigma: f64, sensitivity: f64 },
    /// `steps` Poisson-subsampled Gaussian steps (DP-SGD / DP-Adam).
    SubsampledGaussian {
        noise_multiplier: f64,
        sampling_rate: f64,
        steps: u64,
    },
}

/// Append-only log of the mechanisms run on one private dataset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AccountantLedger {
    events: Vec<MechanismEvent>,
}

impl AccountantLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, event: MechanismEvent) {
        self.events.push(event);
    }

    pub fn events(&self) -> &[MechanismEvent] {
        &self.events
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Pointwise sum of every event's RDP curve over `orders`.
    pub fn rdp_curve(&self, orders: &[f64]) -> Result<Vec<f64>> {
        let mut total = vec![0.0; orders.len()];
        for event in &self.events {
            let curve = event_curve(event, orders)?;
            for (t, c) in total.iter_mut().zip(curve) {
                *t += c;
            }
        }
        Ok(total)
    }
}

fn event_curve(event: &MechanismEvent, orders: &[f64]) -> Result<Vec<f64>> {
    match *event {
        MechanismEvent::Gaussian { sigma, sensitivity } => {
            if !(sensitivity > 0.0) || !(sigma >= 0.0) {
                return Err(Error::invalid(
                    "Gaussian event needs sigma >= 0 and sensitivity > 0",
                ));
            }
            Ok(rdp_gaussian(sigma, sensitivity, orders))
        }
        MechanismEvent::SubsampledGaussian {
            noise_multiplier,
            sampling_rate,
            steps,
        } => {
            let per_step = rdp_subsampled_gaussian(noise_multiplier, sampling_rate, orders)?;
            Ok(per_step.into_iter().map(|v| v * steps as f64).collect())
        }
    }
}

/// A backend that turns a ledger into a composed ε.
pub trait Accountant {
    fn epsilon(&self, ledger: &AccountantLedger, delta: f64) -> Result<f64>;
}

/// Rényi-DP accountant over a fixed grid of orders.
#[derive(Debug, Clone)]
pub struct RdpAccountant {
    orders: Vec<f64>,
}

impl Default for RdpAccountant {
    fn default() -> Self {
        Self {
            orders: default_orders(),
        }
    }
}

impl RdpAccountant {
    pub fn with_orders(orders: Vec<f64>) -> Self {
        Self { orders }
    }

    pub fn orders(&self) -> &[f64] {
        &self.orders
    }

    /// Composed ε and the Rényi order at which it was attained.
    pub fn epsilon_and_order(&self, ledger: &AccountantLedger, delta: f64) -> Result<(f64, f64)> {
        if ledger.is_empty() {
            return Err(Error::invalid("cannot account an empty ledger"));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::invalid(format!(
                "delta must lie in (0, 1), got {delta}"
            )));
        }
        let curve = ledger.rdp_curve(&self.orders)?;
        rdp_to_epsilon(&self.orders, &curve, delta)
    }
}

impl Accountant for RdpAccountant {
    fn epsilon(&self, ledger: &AccountantLedger, delta: f64) -> Result<f64> {
        self.epsilon_and_order(ledger, delta).map(|(eps, _)| eps)
    }
}

/// Composed ε of every event in `ledger` under the default RDP accountant.
pub fn compose_and_convert(ledger: &AccountantLedger, delta: f64) -> Result<f64> {
    RdpAccountant::default().epsilon(ledger, delta)
}

/// δ = 1 / (N ln N).
pub fn delta_for(n: u64) -> Result<f64> {
    if n < 3 {
        return Err(Error::invalid(format!("delta rule needs N >= 3, got {n}")));
    }
    let n = n as f64;
    Ok(1.0 / (n * n.ln()))
}

/// The noise multiplier for `steps` DP-Adam steps at sampling rate `q` such
/// that, composed with a histogram release at `histogram_sigma`, the total
/// ε equals `target_epsilon` (within 1e-3, never above it).
pub fn solve_noise_multiplier(
    target_epsilon: f64,
    delta: f64,
    q: f64,
    steps: u64,
    histogram_sigma: f64,
) -> Result<f64> {
    let accountant = RdpAccountant::default();
    solve_noise_multiplier_with(
        &accountant,
        target_epsilon,
        delta,
        q,
        steps,
        histogram_sigma,
    )
}

pub fn solve_noise_multiplier_with(
    accountant: &dyn Accountant,
    target_epsilon: f64,
    delta: f64,
    q: f64,
    steps: u64,
    histogram_sigma: f64,
) -> Result<f64> {
    if !(target_epsilon > 0.0) || !target_epsilon.is_finite() {
        return Err(Error::invalid("target epsilon must be positive and finite"));
    }
    if steps == 0 {
        return Err(Error::invalid("steps must be positive"));
    }
    let mut base = AccountantLedger::new();
    base.record(MechanismEvent::Gaussian {
        sigma: histogram_sigma,
        sensitivity: 1.0,
    });
    let hist_eps = accountant.epsilon(&base, delta)?;
    if hist_eps >= target_epsilon {
        return Err(Error::Budget(format!(
            "budget exhausted by histogram (histogram alone spends epsilon {hist_eps:.4} >= target {target_epsilon})"
        )));
    }
    let composed = |sigma: f64| -> Result<f64> {
        let mut ledger = base.clone();
        ledger.record(MechanismEvent::SubsampledGaussian {
            noise_multiplier: sigma,
            sampling_rate: q,
            steps,
        });
        accountant.epsilon(&ledger, delta)
    };
    let (mut lo, mut hi) = (1e-2f64, 1e3f64);
    if composed(hi)? > target_epsilon {
        return Err(Error::Budget(format!(
            "target epsilon {target_epsilon} unreachable with noise multiplier <= {hi}"
        )));
    }
    if composed(lo)? <= target_epsilon {
        return Ok(lo);
    }
    // Invariant: composed(lo) > target >= composed(hi).
    while hi / lo - 1.0 > 1e-10 {
        let mid = (lo * hi).sqrt();
        if composed(mid)? > target_epsilon {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

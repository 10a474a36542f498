use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{keyed, Stream};

/// A histogram released through the Gaussian mechanism, together with its
/// post-processed proportions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisyHistogram {
    pub noisy_counts: Vec<f64>,
    pub proportions: Vec<f64>,
    pub sigma_used: f64,
}

/// Adds independent N(0, σ²) noise to every bin, bin `i` drawing from the
/// stream keyed `(seed, i)`, then clamps negatives to zero and renormalises.
/// An all-zero result becomes the uniform distribution.
pub fn noise_histogram(raw: &[u64], sigma: f64, seed: u64) -> Result<NoisyHistogram> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::invalid(
            "histogram sigma must be finite and non-negative",
        ));
    }
    if raw.is_empty() {
        return Err(Error::invalid("histogram has no bins"));
    }
    let noisy_counts: Vec<f64> = raw
        .iter()
        .enumerate()
        .map(|(bin, &count)| {
            let z: f64 = if sigma > 0.0 {
                StandardNormal.sample(&mut keyed(seed, Stream::HistogramNoise, &[bin as u64]))
            } else {
                0.0
            };
            count as f64 + sigma * z
        })
        .collect();
    let proportions = normalise_clamped(&noisy_counts);
    Ok(NoisyHistogram {
        noisy_counts,
        proportions,
        sigma_used: sigma,
    })
}

/// Clamp-then-normalise; uniform when nothing positive remains.
pub fn normalise_clamped(values: &[f64]) -> Vec<f64> {
    let clamped: Vec<f64> = values.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = clamped.iter().sum();
    if total <= 0.0 {
        return vec![1.0 / values.len() as f64; values.len()];
    }
    clamped.iter().map(|v| v / total).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_noise_gives_empirical_proportions() {
        let h = noise_histogram(&[5, 3, 2], 0.0, 1).unwrap();
        assert_eq!(h.proportions, vec![0.5, 0.3, 0.2]);
        assert_eq!(h.noisy_counts, vec![5.0, 3.0, 2.0]);
    }

    #[test]
    fn degenerate_histogram_is_uniform() {
        let h = noise_histogram(&[0, 0, 0, 0], 0.0, 1).unwrap();
        assert_eq!(h.proportions, vec![0.25; 4]);
    }

    #[test]
    fn proportions_valid_under_heavy_noise() {
        for seed in 0..200 {
            let h = noise_histogram(&[3, 0, 1, 7], 10.0, seed).unwrap();
            let sum: f64 = h.proportions.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
            assert!(h.proportions.iter().all(|&p| p >= 0.0));
        }
    }

    #[test]
    fn bins_draw_independent_keyed_noise() {
        let a = noise_histogram(&[100, 100], 10.0, 9).unwrap();
        let b = noise_histogram(&[100, 100, 100], 10.0, 9).unwrap();
        // Adding a bin does not perturb the noise on existing bins.
        assert_eq!(a.noisy_counts[..], b.noisy_counts[..2]);
        assert_ne!(a.noisy_counts[0], a.noisy_counts[1]);
    }
}

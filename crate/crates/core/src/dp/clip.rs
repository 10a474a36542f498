use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::{keyed, Stream};

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Scales `grad` onto the L2 ball of radius `clip_norm` if it lies outside.
pub fn clip_per_example(grad: &[f64], clip_norm: f64) -> Result<Vec<f64>> {
    let mut out = grad.to_vec();
    clip_in_place(&mut out, clip_norm)?;
    Ok(out)
}

pub fn clip_in_place(grad: &mut [f64], clip_norm: f64) -> Result<()> {
    if !(clip_norm > 0.0) {
        return Err(Error::invalid("clip norm must be positive"));
    }
    if grad.iter().any(|x| !x.is_finite()) {
        return Err(Error::numeric("non-finite gradient component"));
    }
    let norm = l2_norm(grad);
    if norm > clip_norm {
        let scale = clip_norm / norm;
        grad.iter_mut().for_each(|x| *x *= scale);
    }
    Ok(())
}

/// Noisy mean of clipped per-example gradients:
/// `(Σ clip(g_i) + N(0, (σC)² I)) / B`.
///
/// Examples are summed in index order and the noise for coordinate `j` of
/// step `step` comes from the stream keyed `(seed, step)` at position `j`,
/// so the result is bit-identical however the gradients were produced.
/// An infinite `clip_norm` disables clipping.
pub fn dp_aggregate(
    per_example_grads: &[Vec<f64>],
    clip_norm: f64,
    noise_multiplier: f64,
    seed: u64,
    step: u64,
) -> Result<Vec<f64>> {
    let Some(first) = per_example_grads.first() else {
        return Err(Error::invalid("empty batch"));
    };
    if !(noise_multiplier >= 0.0) {
        return Err(Error::invalid("noise multiplier must be non-negative"));
    }
    if noise_multiplier > 0.0 && !clip_norm.is_finite() {
        return Err(Error::invalid("noise requires a finite clip norm"));
    }
    let dim = first.len();
    let mut sum = vec![0.0; dim];
    let mut scratch = vec![0.0; dim];
    for g in per_example_grads {
        if g.len() != dim {
            return Err(Error::invalid("per-example gradients differ in length"));
        }
        scratch.copy_from_slice(g);
        if clip_norm.is_finite() {
            clip_in_place(&mut scratch, clip_norm)?;
        } else if scratch.iter().any(|x| !x.is_finite()) {
            return Err(Error::numeric("non-finite gradient component"));
        }
        for (s, x) in sum.iter_mut().zip(&scratch) {
            *s += x;
        }
    }
    if noise_multiplier > 0.0 {
        let std = noise_multiplier * clip_norm;
        let mut rng = keyed(seed, Stream::GradientNoise, &[step]);
        for s in sum.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *s += std * z;
        }
    }
    let b = per_example_grads.len() as f64;
    sum.iter_mut().for_each(|s| *s /= b);
    Ok(sum)
}

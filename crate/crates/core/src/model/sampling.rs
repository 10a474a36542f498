use rand::Rng;

use super::config::{Mode, SamplerConfig};
use super::params::Parameters;
use super::transformer::{encode_condition, next_logits};
use crate::corpus::{TokenSequence, BOS, EOS, PAD, SEP};
use crate::error::Result;
use crate::rng::{keyed, Stream};

/// Tokens that may never be sampled.
const BANNED: [u32; 3] = [PAD, BOS, SEP];

/// Temperature-scaled softmax with banned tokens at probability zero.
pub fn sampling_distribution(logits: &[f64], temperature: f64) -> Vec<f64> {
    let scaled: Vec<f64> = logits
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            if BANNED.contains(&(i as u32)) {
                f64::NEG_INFINITY
            } else {
                l / temperature
            }
        })
        .collect();
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = scaled.iter().map(|&s| (s - max).exp()).collect();
    let z: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / z).collect()
}

/// Smallest prefix of tokens, sorted by probability descending and id
/// ascending, whose cumulative probability reaches `top_p`.
pub fn nucleus(probs: &[f64], top_p: f64) -> Vec<(u32, f64)> {
    let mut order: Vec<(u32, f64)> = probs
        .iter()
        .enumerate()
        .map(|(i, &p)| (i as u32, p))
        .collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut cumulative = 0.0;
    for (n, &(_, p)) in order.iter().enumerate() {
        cumulative += p;
        if cumulative >= top_p {
            order.truncate(n + 1);
            return order;
        }
    }
    // Rounding kept the total just under top_p: keep everything with mass.
    order.retain(|&(_, p)| p > 0.0);
    order
}

/// Draws from the renormalised nucleus using a uniform variate `u ∈ [0, 1)`.
pub fn sample_nucleus(nucleus: &[(u32, f64)], u: f64) -> u32 {
    let mass: f64 = nucleus.iter().map(|&(_, p)| p).sum();
    let target = u * mass;
    let mut acc = 0.0;
    for &(id, p) in nucleus {
        acc += p;
        if target < acc {
            return id;
        }
    }
    nucleus.last().expect("nucleus is never empty").0
}

/// Nucleus sampling until EOS or `max_new_tokens`; the draw at position `t`
/// uses the stream keyed by `(seed, t)`. Returns the generated tokens
/// without BOS/EOS.
pub fn generate(
    params: &Parameters,
    condition: &[u32],
    sampler: &SamplerConfig,
    seed: u64,
) -> Result<TokenSequence> {
    sampler.validate()?;
    let config = params.config();
    let memory = match config.mode {
        Mode::EncoderDecoder => Some(encode_condition(params, condition)?),
        Mode::DecoderOnly => None,
    };
    let budget = sampler.max_new_tokens.min(config.max_len - 1);
    let mut prefix = vec![BOS];
    let mut out = Vec::new();
    for t in 0..budget {
        let logits = next_logits(params, memory.as_deref(), &prefix)?;
        let probs = sampling_distribution(&logits, sampler.temperature);
        let set = nucleus(&probs, sampler.top_p);
        let u: f64 = keyed(seed, Stream::Sampling, &[t as u64]).gen();
        let token = sample_nucleus(&set, u);
        if token == EOS {
            break;
        }
        out.push(token);
        prefix.push(token);
    }
    Ok(TokenSequence { ids: out })
}

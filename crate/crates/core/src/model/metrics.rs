use rayon::prelude::*;

use super::config::Mode;
use super::params::Parameters;
use super::transformer::forward_loss;
use crate::corpus::{TokenSequence, PAD};
use crate::error::{Error, Result};

/// Teacher-forced counts over non-PAD next-token positions.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LmStats {
    pub positions: u64,
    pub correct: u64,
    /// Summed negative log-likelihood in nats.
    pub nll: f64,
}

impl LmStats {
    pub fn merge(self, other: LmStats) -> LmStats {
        LmStats {
            positions: self.positions + other.positions,
            correct: self.correct + other.correct,
            nll: self.nll + other.nll,
        }
    }

    pub fn accuracy(&self) -> f64 {
        self.correct as f64 / self.positions as f64
    }

    pub fn perplexity(&self) -> f64 {
        (self.nll / self.positions as f64).exp()
    }
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Counts argmax hits for row-major `[targets.len(), vocab]` logits.
pub fn argmax_hits(logits: &[f64], vocab: usize, targets: &[u32]) -> (u64, u64) {
    let mut hits = 0;
    let mut positions = 0;
    for (row, &t) in logits.chunks(vocab).zip(targets) {
        if t == PAD {
            continue;
        }
        positions += 1;
        if argmax(row) == t as usize {
            hits += 1;
        }
    }
    (hits, positions)
}

/// Accuracy and likelihood statistics of a decoder-only model on `dataset`.
/// Sequences are evaluated in parallel and summed in dataset order.
pub fn lm_stats(params: &Parameters, dataset: &[TokenSequence]) -> Result<LmStats> {
    if params.config().mode != Mode::DecoderOnly {
        return Err(Error::invalid(
            "language-model metrics need a decoder-only model",
        ));
    }
    if dataset.is_empty() {
        return Err(Error::invalid("empty evaluation dataset"));
    }
    let per_seq: Vec<LmStats> = dataset
        .par_iter()
        .filter(|s| s.len() >= 2)
        .map(|s| {
            let out = forward_loss(params, &[], &s.ids)?;
            let targets = &s.ids[1..];
            let (correct, positions) = argmax_hits(&out.logits, out.vocab_size, targets);
            Ok(LmStats {
                positions,
                correct,
                nll: out.loss * positions as f64,
            })
        })
        .collect::<Result<_>>()?;
    let total = per_seq.into_iter().fold(LmStats::default(), LmStats::merge);
    if total.positions == 0 {
        return Err(Error::invalid(
            "evaluation dataset has no scorable positions",
        ));
    }
    Ok(total)
}

pub fn next_word_accuracy(params: &Parameters, dataset: &[TokenSequence]) -> Result<f64> {
    Ok(lm_stats(params, dataset)?.accuracy())
}

pub fn perplexity(params: &Parameters, dataset: &[TokenSequence]) -> Result<f64> {
    Ok(lm_stats(params, dataset)?.perplexity())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::config::ModelConfig;
    use crate::model::params::init_model;

    fn lm(seed: u64, vocab: usize) -> Parameters {
        init_model(&ModelConfig {
            d_model: 16,
            n_layers: 1,
            ffn_dim: 16,
            max_len: 16,
            seed,
            ..ModelConfig::new(Mode::DecoderOnly, vocab)
        })
        .unwrap()
    }

    fn seq(ids: &[u32]) -> TokenSequence {
        TokenSequence { ids: ids.to_vec() }
    }

    #[test]
    fn oracle_logits_score_perfectly() {
        let targets = [5u32, 7, 6, PAD];
        let vocab = 9;
        let mut logits = vec![0.0; targets.len() * vocab];
        for (i, &t) in targets.iter().enumerate() {
            logits[i * vocab + t as usize] = 3.0;
        }
        assert_eq!(argmax_hits(&logits, vocab, &targets), (3, 3));
    }

    #[test]
    fn ties_resolve_to_lowest_id() {
        assert_eq!(argmax(&[1.0, 2.0, 2.0]), 1);
    }

    #[test]
    fn perplexity_is_exp_of_forward_loss() {
        let p = lm(1, 20);
        let s = seq(&[1, 6, 7, 8, 2]);
        let loss = forward_loss(&p, &[], &s.ids).unwrap().loss;
        assert!((perplexity(&p, &[s]).unwrap() - loss.exp()).abs() < 1e-9);
    }

    #[test]
    fn uniform_logits_give_perplexity_v() {
        let mut p = lm(2, 100);
        p.tensor_mut("lm_head.w").unwrap().fill(0.0);
        let data: Vec<TokenSequence> = (0..8)
            .map(|i| seq(&[1, 5 + i, 20 + i, 40 + i, 2]))
            .collect();
        let ppl = perplexity(&p, &data).unwrap();
        assert!((ppl / 100.0 - 1.0).abs() < 0.1, "perplexity {ppl}");
    }

    #[test]
    fn concatenation_is_position_weighted() {
        let p = lm(3, 20);
        let a = vec![seq(&[1, 6, 7, 2]), seq(&[1, 9, 2])];
        let b = vec![seq(&[1, 8, 8, 8, 8, 2])];
        let sa = lm_stats(&p, &a).unwrap();
        let sb = lm_stats(&p, &b).unwrap();
        let both: Vec<TokenSequence> = a.iter().chain(&b).cloned().collect();
        let weighted = (sa.accuracy() * sa.positions as f64 + sb.accuracy() * sb.positions as f64)
            / (sa.positions + sb.positions) as f64;
        assert!((next_word_accuracy(&p, &both).unwrap() - weighted).abs() < 1e-12);
    }

    #[test]
    fn empty_dataset_and_wrong_mode_rejected() {
        assert!(next_word_accuracy(&lm(0, 20), &[]).is_err());
        let ed = init_model(&ModelConfig {
            d_model: 8,
            ffn_dim: 8,
            ..ModelConfig::new(Mode::EncoderDecoder, 20)
        })
        .unwrap();
        assert!(perplexity(&ed, &[seq(&[1, 6, 2])]).is_err());
    }
}

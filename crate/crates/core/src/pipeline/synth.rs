use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::condition::finetune_condition;
use crate::corpus::{decode, encode, Corpus, Document, Provenance, Vocabulary};
use crate::dp::NoisyHistogram;
use crate::error::{Error, Result};
use crate::model::{generate, Parameters, SamplerConfig};
use crate::rng::{derive_key, Stream};
use crate::topics::TopicModel;

pub const GENERATION_RETRIES: usize = 3;
/// Text emitted for a document that stayed empty after every retry.
pub const EMPTY_PLACEHOLDER: &str = "<unk>";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisPlan {
    pub counts: Vec<usize>,
    pub total: usize,
    pub proportions: Vec<f64>,
}

/// Largest-remainder apportionment of `n` documents: floor every quota,
/// then hand the remaining seats out by descending fractional part, ties
/// to the lowest topic id.
pub fn allocate_counts(proportions: &[f64], n: usize) -> SynthesisPlan {
    let quotas: Vec<f64> = proportions.iter().map(|p| p * n as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..quotas.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &t in order.iter().take(n.saturating_sub(assigned)) {
        counts[t] += 1;
    }
    SynthesisPlan {
        counts,
        total: n,
        proportions: proportions.to_vec(),
    }
}

/// Proportions over real topics: the unclassified (last) bin is dropped and
/// the rest renormalised; no mass anywhere gives the uniform distribution.
pub fn topic_proportions(histogram: &NoisyHistogram) -> Vec<f64> {
    let k = histogram.proportions.len().saturating_sub(1);
    let real = &histogram.proportions[..k];
    let total: f64 = real.iter().sum();
    if total > 0.0 {
        real.iter().map(|p| p / total).collect()
    } else {
        vec![1.0 / k as f64; k]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisConfig {
    pub n: usize,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub document_type: Option<String>,
    /// Must match the finetuning stage; false generates from empty conditions.
    #[serde(default = "default_true")]
    pub use_keywords: bool,
}

fn default_true() -> bool {
    true
}

impl SynthesisConfig {
    pub fn new(n: usize, seed: u64) -> Self {
        Self {
            n,
            sampler: SamplerConfig::default(),
            seed,
            document_type: None,
            use_keywords: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthesisOutput {
    pub corpus: Corpus,
    pub plan: SynthesisPlan,
    pub warnings: Vec<String>,
}

/// Generates `config.n` documents split across topics by the noisy
/// histogram, each conditioned on its topic's keyword line.
///
/// Only DP-released or public artifacts are accepted: the parameters and
/// histogram from the private stage, and a topic model fitted on public
/// data. A topic model fitted on private data is rejected.
pub fn synthesize(
    params: &Parameters,
    vocab: &Vocabulary,
    topics: &TopicModel,
    histogram: &NoisyHistogram,
    config: &SynthesisConfig,
) -> Result<SynthesisOutput> {
    if topics.source == Provenance::Private {
        return Err(Error::invalid(
            "synthesis refuses a topic model fitted on private data",
        ));
    }
    if histogram.proportions.len() != topics.k + 1 {
        return Err(Error::invalid(format!(
            "histogram has {} bins but the topic model has {} topics plus unclassified",
            histogram.proportions.len(),
            topics.k
        )));
    }
    let sampler = &config.sampler;
    sampler.validate()?;
    let plan = allocate_counts(&topic_proportions(histogram), config.n);
    let max_len = params.config().max_len;
    let conditions: Vec<Vec<u32>> = topics
        .keywords
        .iter()
        .map(|kws| {
            let text = if config.use_keywords {
                finetune_condition(kws, config.document_type.as_deref())
            } else {
                String::new()
            };
            encode(vocab, &text, max_len).ids
        })
        .collect();
    let jobs: Vec<(usize, usize)> = plan
        .counts
        .iter()
        .enumerate()
        .flat_map(|(t, &c)| (0..c).map(move |i| (t, i)))
        .collect();
    let generated: Vec<(String, bool)> = jobs
        .par_iter()
        .map(|&(t, i)| {
            for attempt in 0..=GENERATION_RETRIES {
                let doc_seed = derive_key(
                    config.seed,
                    Stream::Synthesis,
                    &[t as u64, i as u64, attempt as u64],
                );
                let seq = generate(params, &conditions[t], sampler, doc_seed)?;
                let text = decode(vocab, &seq)?;
                if !text.trim().is_empty() {
                    return Ok((text, false));
                }
            }
            Ok((EMPTY_PLACEHOLDER.to_string(), true))
        })
        .collect::<Result<_>>()?;
    let mut warnings = Vec::new();
    let documents = jobs
        .iter()
        .zip(generated)
        .enumerate()
        .map(|(k, (&(t, i), (text, empty)))| {
            if empty {
                warnings.push(format!(
                    "topic {t} document {i} stayed empty after {GENERATION_RETRIES} retries; emitted a single <unk>"
                ));
            }
            Document {
                id: format!("syn-{k:06}"),
                text,
                label: Some(format!("topic-{t}")),
                true_topic: Some(t),
            }
        })
        .collect();
    Ok(SynthesisOutput {
        corpus: Corpus::new(documents, Provenance::Synthetic),
        plan,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_quotas() {
        assert_eq!(allocate_counts(&[0.5, 0.3, 0.2], 10).counts, vec![5, 3, 2]);
    }

    #[test]
    fn remainder_tie_goes_to_lowest_topic() {
        // Quotas 5.5 / 2.5 / 2.0: one seat left, both .5 remainders tie.
        assert_eq!(
            allocate_counts(&[0.55, 0.25, 0.20], 10).counts,
            vec![6, 2, 2]
        );
    }

    #[test]
    fn zero_documents() {
        assert_eq!(allocate_counts(&[0.4, 0.6], 0).counts, vec![0, 0]);
    }

    #[test]
    fn unclassified_bin_dropped() {
        let h = NoisyHistogram {
            noisy_counts: vec![3.0, 1.0, 4.0],
            proportions: vec![0.375, 0.125, 0.5],
            sigma_used: 0.0,
        };
        let p = topic_proportions(&h);
        assert!((p[0] - 0.75).abs() < 1e-12 && (p[1] - 0.25).abs() < 1e-12);
        let empty = NoisyHistogram {
            noisy_counts: vec![0.0, 0.0, 5.0],
            proportions: vec![0.0, 0.0, 1.0],
            sigma_used: 0.0,
        };
        assert_eq!(topic_proportions(&empty), vec![0.5, 0.5]);
    }

    proptest! {
        #[test]
        fn counts_sum_to_n_and_stay_within_one(raw in prop::collection::vec(0.0f64..1.0, 1..12), n in 0usize..5000) {
            let total: f64 = raw.iter().sum();
            prop_assume!(total > 0.0);
            let p: Vec<f64> = raw.iter().map(|x| x / total).collect();
            let plan = allocate_counts(&p, n);
            prop_assert_eq!(plan.counts.iter().sum::<usize>(), n);
            for (c, pi) in plan.counts.iter().zip(&p) {
                prop_assert!((*c as f64 - pi * n as f64).abs() < 1.0);
            }
        }
    }
}

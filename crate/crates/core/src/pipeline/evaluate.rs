use serde::{Deserialize, Serialize};

use super::train::{train, Pair};
use crate::corpus::{encode, Corpus, TokenSequence, Vocabulary};
use crate::error::{Error, Result};
use crate::model::{init_model, lm_stats, Mode, ModelConfig, Parameters, TrainConfig};
use crate::topics::{Embedder, TopicModel};

/// Downstream language model recipe; the vocabulary size is taken from the
/// vocabulary at evaluation time and the mode is always decoder-only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DownstreamConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub next_word_accuracy: f64,
    pub perplexity: f64,
    /// JS divergence (nats) between the exact topic histograms of the
    /// training corpus and the real test corpus.
    pub topic_js_divergence: f64,
    pub train_documents: usize,
    pub test_positions: u64,
    /// ε of the release the training corpus came from; `None` for real
    /// data, filled in by the caller for synthetic corpora.
    #[serde(
        default,
        with = "super::manifest::extended_float",
        skip_serializing_if = "Option::is_none"
    )]
    pub composed_epsilon: Option<f64>,
}

/// Jensen-Shannon divergence in nats; inputs are normalised first.
pub fn js_divergence(p: &[f64], q: &[f64]) -> f64 {
    let sp: f64 = p.iter().sum();
    let sq: f64 = q.iter().sum();
    let mut total = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        let (a, b) = (a / sp, b / sq);
        let m = 0.5 * (a + b);
        if a > 0.0 {
            total += 0.5 * a * (a / m).ln();
        }
        if b > 0.0 {
            total += 0.5 * b * (b / m).ln();
        }
    }
    total.max(0.0)
}

pub fn encode_corpus(corpus: &Corpus, vocab: &Vocabulary, max_len: usize) -> Vec<TokenSequence> {
    corpus.texts().map(|t| encode(vocab, t, max_len)).collect()
}

/// Trains a fresh decoder-only model on `corpus` with plain Adam. The
/// batch is capped at the corpus size.
pub fn train_downstream(
    corpus: &Corpus,
    vocab: &Vocabulary,
    config: &DownstreamConfig,
) -> Result<Parameters> {
    if corpus.is_empty() {
        return Err(Error::invalid(
            "empty training corpus for the downstream model",
        ));
    }
    let model = ModelConfig {
        mode: Mode::DecoderOnly,
        vocab_size: vocab.len(),
        ..config.model.clone()
    };
    let mut params = init_model(&model)?;
    let pairs: Vec<Pair> = encode_corpus(corpus, vocab, model.max_len)
        .into_iter()
        .map(|s| Pair {
            condition: Vec::new(),
            target: s.ids,
        })
        .collect();
    let plain = TrainConfig {
        clip: None,
        noise_multiplier: 0.0,
        batch_size: config.train.batch_size.min(pairs.len()),
        ..config.train.clone()
    };
    train(&mut params, &pairs, &plain)?;
    Ok(params)
}

/// Trains a downstream model on `train_corpus` (usually synthetic) and
/// scores it on `real_test`; also compares the two corpora's exact topic
/// distributions. These histograms are evaluation-only and never released.
pub fn evaluate(
    train_corpus: &Corpus,
    real_test: &Corpus,
    vocab: &Vocabulary,
    downstream: &DownstreamConfig,
    topics: &TopicModel,
    embedder: &dyn Embedder,
) -> Result<EvalReport> {
    if real_test.is_empty() {
        return Err(Error::invalid("empty test corpus"));
    }
    let params = train_downstream(train_corpus, vocab, downstream)?;
    let stats = lm_stats(
        &params,
        &encode_corpus(real_test, vocab, params.config().max_len),
    )?;
    let to_f64 = |c: &Corpus| -> Vec<f64> {
        topics
            .raw_topic_histogram(c, embedder)
            .counts
            .iter()
            .map(|&x| x as f64)
            .collect()
    };
    Ok(EvalReport {
        next_word_accuracy: stats.accuracy(),
        perplexity: stats.perplexity(),
        topic_js_divergence: js_divergence(&to_f64(train_corpus), &to_f64(real_test)),
        train_documents: train_corpus.len(),
        test_positions: stats.positions,
        composed_epsilon: None,
    })
}

use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Corpus, Document, Provenance};
use crate::error::{Error, Result};
use crate::rng::{keyed, Stream};

fn default_noise_words() -> Vec<String> {
    ["the", "of", "and", "a", "in", "to", "is", "with"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

fn default_noise_rate() -> f64 {
    0.15
}

fn default_zipf() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyTopic {
    pub name: String,
    pub words: Vec<String>,
    pub weight: f64,
}

/// Recipe for a corpus whose documents each come from one known topic.
///
/// Words inside a topic's pool are drawn with Zipf weights `1/(rank+1)^s`
/// so that topics have a recognisable head; each position is replaced by a
/// shared noise word with probability `noise_rate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToySpec {
    pub topics: Vec<ToyTopic>,
    pub docs: usize,
    pub doc_len: (usize, usize),
    pub seed: u64,
    #[serde(default = "default_noise_words")]
    pub noise_words: Vec<String>,
    #[serde(default = "default_noise_rate")]
    pub noise_rate: f64,
    #[serde(default = "default_zipf")]
    pub zipf_exponent: f64,
}

impl ToySpec {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Topics with pools `"{prefix}{t}w{i}"`, handy for tests and demos.
    pub fn synthetic_pools(
        weights: &[f64],
        pool_size: usize,
        docs: usize,
        doc_len: (usize, usize),
        seed: u64,
    ) -> Self {
        let topics = weights
            .iter()
            .enumerate()
            .map(|(t, &weight)| ToyTopic {
                name: format!("topic{t}"),
                words: (0..pool_size).map(|i| format!("t{t}w{i}")).collect(),
                weight,
            })
            .collect();
        Self {
            topics,
            docs,
            doc_len,
            seed,
            noise_words: default_noise_words(),
            noise_rate: default_noise_rate(),
            zipf_exponent: default_zipf(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.docs == 0 {
            return Err(Error::invalid("empty corpus: docs must be positive"));
        }
        if self.topics.is_empty() {
            return Err(Error::invalid("toy spec has no topics"));
        }
        for t in &self.topics {
            if !(t.weight > 0.0) || !t.weight.is_finite() {
                return Err(Error::invalid(format!(
                    "topic {:?} weight must be positive",
                    t.name
                )));
            }
            if t.words.len() < 5 {
                return Err(Error::invalid(format!(
                    "topic {:?} needs at least 5 pool words",
                    t.name
                )));
            }
        }
        let (lo, hi) = self.doc_len;
        if lo == 0 || lo > hi {
            return Err(Error::invalid(format!(
                "invalid doc_len range [{lo}, {hi}]"
            )));
        }
        if !(0.0..=1.0).contains(&self.noise_rate) {
            return Err(Error::invalid("noise_rate must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Generates the corpus described by `spec`. Document `i` depends only on
/// `(spec, i)`.
pub fn generate_toy_corpus(spec: &ToySpec, provenance: Provenance) -> Result<Corpus> {
    spec.validate()?;
    let topic_dist = WeightedIndex::new(spec.topics.iter().map(|t| t.weight))
        .map_err(|e| Error::invalid(format!("topic weights: {e}")))?;
    let pool_dists: Vec<WeightedIndex<f64>> = spec
        .topics
        .iter()
        .map(|t| {
            WeightedIndex::new(
                (0..t.words.len()).map(|r| 1.0 / ((r + 1) as f64).powf(spec.zipf_exponent)),
            )
            .map_err(|e| Error::invalid(format!("pool weights: {e}")))
        })
        .collect::<Result<_>>()?;

    let documents = (0..spec.docs)
        .map(|i| {
            let mut rng = keyed(spec.seed, Stream::ToyCorpus, &[i as u64]);
            let topic = topic_dist.sample(&mut rng);
            let len = rng.gen_range(spec.doc_len.0..=spec.doc_len.1);
            let pool = &spec.topics[topic].words;
            let words: Vec<&str> = (0..len)
                .map(|_| {
                    if !spec.noise_words.is_empty() && rng.gen::<f64>() < spec.noise_rate {
                        spec.noise_words[rng.gen_range(0..spec.noise_words.len())].as_str()
                    } else {
                        pool[pool_dists[topic].sample(&mut rng)].as_str()
                    }
                })
                .collect();
            Document {
                id: format!("toy-{i:06}"),
                text: words.join(" "),
                label: Some(spec.topics[topic].name.clone()),
                true_topic: Some(topic),
            }
        })
        .collect();
    Ok(Corpus::new(documents, provenance))
}

//! Topic model over a public corpus: document embedding, clustering into
//! `K` topics, ten keywords per topic, nearest-topic assignment with an
//! unclassified bin, and raw topic histograms.

mod embed;
mod keywords;
mod kmeans;

pub use embed::{dot, is_zero, normalise, Embedder, HashedTfIdf};
pub use keywords::{
    class_tfidf, extract_keywords, most_frequent_tokens, KeywordExtraction, KEYWORDS_PER_TOPIC,
    STOP_TOKEN_COUNT,
};
pub use kmeans::{nearest, ClusterStrategy, Clustering, SphericalKMeans, MAX_ITERATIONS};

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Provenance};
use crate::error::{Error, Result};

pub const DEFAULT_TOPICS: usize = 8;
pub const DEFAULT_THRESHOLD: f64 = 0.05;
pub const DEFAULT_DIMENSION: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopicConfig {
    pub k: usize,
    pub threshold: f64,
    pub dimension: usize,
    pub hash_seed: u64,
    pub seed: u64,
}

impl Default for TopicConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_TOPICS,
            threshold: DEFAULT_THRESHOLD,
            dimension: DEFAULT_DIMENSION,
            hash_seed: 0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicModel {
    pub dimension: usize,
    pub k: usize,
    pub threshold: f64,
    pub centroids: Vec<Vec<f64>>,
    pub keywords: Vec<Vec<String>>,
    /// Provenance of the corpus the model was fitted on.
    #[serde(default = "public")]
    pub source: Provenance,
}

fn public() -> Provenance {
    Provenance::Public
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopicAssignment {
    /// `None` is the unclassified bin.
    pub topic: Option<usize>,
    pub similarity: f64,
}

impl TopicAssignment {
    pub fn is_unclassified(&self) -> bool {
        self.topic.is_none()
    }
}

/// Per-topic document counts; the last bin counts unclassified documents.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawHistogram {
    pub counts: Vec<u64>,
}

impl RawHistogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn unclassified(&self) -> u64 {
        *self.counts.last().unwrap_or(&0)
    }
}

#[derive(Debug, Clone)]
pub struct TopicFit {
    pub model: TopicModel,
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub empty_topics: Vec<usize>,
}

pub fn embed_corpus(corpus: &Corpus, embedder: &dyn Embedder) -> Vec<Vec<f64>> {
    corpus
        .documents
        .par_iter()
        .map(|d| embedder.embed(&d.text))
        .collect()
}

/// Fits a topic model with spherical k-means.
pub fn fit_topics(
    corpus: &Corpus,
    config: &TopicConfig,
    embedder: &dyn Embedder,
) -> Result<TopicFit> {
    fit_topics_with(&SphericalKMeans, corpus, config, embedder)
}

pub fn fit_topics_with(
    strategy: &dyn ClusterStrategy,
    corpus: &Corpus,
    config: &TopicConfig,
    embedder: &dyn Embedder,
) -> Result<TopicFit> {
    if !(-1.0..=1.0).contains(&config.threshold) {
        return Err(Error::invalid("topic threshold must lie in [-1, 1]"));
    }
    let embeddings = embed_corpus(corpus, embedder);
    let nonzero: Vec<usize> = (0..embeddings.len())
        .filter(|&i| !is_zero(&embeddings[i]))
        .collect();
    let points: Vec<Vec<f64>> = nonzero.iter().map(|&i| embeddings[i].clone()).collect();
    let clustering = strategy.cluster(&points, config.k, config.seed)?;

    let mut assignments = vec![None; corpus.len()];
    for (&doc, &topic) in nonzero.iter().zip(&clustering.assignments) {
        assignments[doc] = Some(topic);
    }
    let stop = most_frequent_tokens(corpus, STOP_TOKEN_COUNT);
    let kw = extract_keywords(corpus, &assignments, config.k, &stop);
    if !kw.empty_topics.is_empty() {
        log::warn!(
            "topics {:?} received no documents and have no keywords",
            kw.empty_topics
        );
    }
    Ok(TopicFit {
        model: TopicModel {
            dimension: embedder.dimension(),
            k: config.k,
            threshold: config.threshold,
            centroids: clustering.centroids,
            keywords: kw.keywords,
            source: corpus.provenance,
        },
        objective_trace: clustering.objective_trace,
        iterations: clustering.iterations,
        empty_topics: kw.empty_topics,
    })
}

impl TopicModel {
    /// Nearest centroid by cosine; unclassified for zero vectors or when the
    /// best similarity falls below the threshold.
    pub fn assign_embedding(&self, embedding: &[f64]) -> TopicAssignment {
        if is_zero(embedding) {
            return TopicAssignment {
                topic: None,
                similarity: 0.0,
            };
        }
        let (best, similarity) = nearest(embedding, &self.centroids);
        TopicAssignment {
            topic: (similarity >= self.threshold).then_some(best),
            similarity,
        }
    }

    pub fn assign_topic(&self, text: &str, embedder: &dyn Embedder) -> TopicAssignment {
        self.assign_embedding(&embedder.embed(text))
    }

    pub fn assign_corpus(&self, corpus: &Corpus, embedder: &dyn Embedder) -> Vec<TopicAssignment> {
        corpus
            .documents
            .par_iter()
            .map(|d| self.assign_topic(&d.text, embedder))
            .collect()
    }

    pub fn histogram_of(&self, assignments: &[TopicAssignment]) -> RawHistogram {
        let mut counts = vec![0u64; self.k + 1];
        for a in assignments {
            counts[a.topic.unwrap_or(self.k)] += 1;
        }
        RawHistogram { counts }
    }

    pub fn raw_topic_histogram(&self, corpus: &Corpus, embedder: &dyn Embedder) -> RawHistogram {
        self.histogram_of(&self.assign_corpus(corpus, embedder))
    }

    fn validate(&self) -> Result<()> {
        if self.k == 0 || self.centroids.len() != self.k || self.keywords.len() != self.k {
            return Err(Error::invalid(
                "topic model needs K >= 1 with one centroid and keyword list per topic",
            ));
        }
        for c in &self.centroids {
            if c.len() != self.dimension {
                return Err(Error::invalid("centroid dimension mismatch"));
            }
            let norm = dot(c, c).sqrt();
            if (norm - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(format!("centroid norm {norm} is not 1")));
            }
        }
        Ok(())
    }
}

/// On-disk form: the model's fields plus the embedder that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicModelFile {
    #[serde(flatten)]
    pub model: TopicModel,
    pub embedder: HashedTfIdf,
}

impl TopicModelFile {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: Self = serde_json::from_str(&text)?;
        file.model.validate()?;
        if file.embedder.dimension != file.model.dimension {
            return Err(Error::invalid("embedder and topic model dimensions differ"));
        }
        Ok(file)
    }
}

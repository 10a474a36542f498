use serde::{Deserialize, Serialize};

use super::condition::finetune_condition;
use super::train::{train, Pair, TrainReport};
use crate::corpus::{encode, Corpus, Vocabulary};
use crate::dp::{
    compose_and_convert, delta_for, noise_histogram, solve_noise_multiplier, AccountantLedger,
    MechanismEvent, NoisyHistogram,
};
use crate::error::{Error, Result};
use crate::model::{Parameters, TrainConfig};
use crate::topics::{Embedder, RawHistogram, TopicModel};

pub const DEFAULT_HISTOGRAM_SIGMA: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpConfig {
    /// Composed ε to reach; the noise multiplier is then solved for.
    #[serde(default)]
    pub target_epsilon: Option<f64>,
    /// Explicit noise multiplier (0 disables DP-Adam noise).
    #[serde(default)]
    pub noise_multiplier: Option<f64>,
    /// δ; defaults to 1 / (N ln N) for a private corpus of N documents.
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default = "DpConfig::default_histogram_sigma")]
    pub histogram_sigma: f64,
    /// Operator-supplied Document Type line for finetune conditions.
    #[serde(default)]
    pub document_type: Option<String>,
    /// Condition on topic keywords; when false every condition is empty.
    #[serde(default = "DpConfig::default_use_keywords")]
    pub use_keywords: bool,
}

impl DpConfig {
    fn default_histogram_sigma() -> f64 {
        DEFAULT_HISTOGRAM_SIGMA
    }

    fn default_use_keywords() -> bool {
        true
    }

    pub fn with_target(epsilon: f64) -> Self {
        Self {
            target_epsilon: Some(epsilon),
            noise_multiplier: None,
            delta: None,
            histogram_sigma: DEFAULT_HISTOGRAM_SIGMA,
            document_type: None,
            use_keywords: true,
        }
    }

    pub fn with_sigma(noise_multiplier: f64, histogram_sigma: f64) -> Self {
        Self {
            target_epsilon: None,
            noise_multiplier: Some(noise_multiplier),
            delta: None,
            histogram_sigma,
            document_type: None,
            use_keywords: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.target_epsilon.is_some() == self.noise_multiplier.is_some() {
            return Err(Error::Config(
                "set exactly one of target_epsilon and noise_multiplier".into(),
            ));
        }
        if !(self.histogram_sigma >= 0.0 && self.histogram_sigma.is_finite()) {
            return Err(Error::Config(
                "histogram_sigma must be finite and non-negative".into(),
            ));
        }
        if let Some(d) = self.delta {
            if !(d > 0.0 && d < 1.0) {
                return Err(Error::Config(format!("delta {d} outside (0, 1)")));
            }
        }
        Ok(())
    }
}

/// Everything released by the private stage.
#[derive(Debug, Clone)]
pub struct FitOutput {
    pub params: Parameters,
    pub histogram: NoisyHistogram,
    pub ledger: AccountantLedger,
    pub noise_multiplier: f64,
    pub sampling_rate: f64,
    pub delta: f64,
    /// Composed ε of the ledger; infinite when any release was noiseless.
    pub epsilon: f64,
    pub report: TrainReport,
    pub training_pairs: usize,
    pub dropped_unclassified: u64,
}

/// Finetune pairs for every classified document: the assigned topic's
/// keyword condition (or an empty one) and the document. Unclassified
/// documents are dropped.
pub fn finetune_pairs(
    corpus: &Corpus,
    topics: &TopicModel,
    embedder: &dyn Embedder,
    vocab: &Vocabulary,
    max_len: usize,
    dp: &DpConfig,
) -> (Vec<Pair>, RawHistogram) {
    let assignments = topics.assign_corpus(corpus, embedder);
    let histogram = topics.histogram_of(&assignments);
    let pairs = corpus
        .documents
        .iter()
        .zip(&assignments)
        .filter_map(|(doc, a)| {
            let t = a.topic?;
            let condition = if dp.use_keywords {
                finetune_condition(&topics.keywords[t], dp.document_type.as_deref())
            } else {
                String::new()
            };
            Some(Pair {
                condition: encode(vocab, &condition, max_len).ids,
                target: encode(vocab, &doc.text, max_len).ids,
            })
        })
        .collect();
    (pairs, histogram)
}

/// The private stage: release a noisy topic histogram, then DP-finetune
/// `init` on keyword-conditioned pairs, recording both releases.
pub fn fit_private(
    private: &Corpus,
    topics: &TopicModel,
    embedder: &dyn Embedder,
    vocab: &Vocabulary,
    init: Parameters,
    train_config: &TrainConfig,
    dp: &DpConfig,
) -> Result<FitOutput> {
    dp.validate()?;
    train_config.validate()?;
    let max_len = init.config().max_len;
    let (pairs, raw) = finetune_pairs(private, topics, embedder, vocab, max_len, dp);
    let histogram = noise_histogram(&raw.counts, dp.histogram_sigma, train_config.seed)?;
    if pairs.is_empty() {
        return Err(Error::invalid(
            "every private document is unclassified; nothing to finetune on",
        ));
    }
    if train_config.batch_size > pairs.len() {
        return Err(Error::Config(format!(
            "batch size {} exceeds the {} private training examples",
            train_config.batch_size,
            pairs.len()
        )));
    }
    let delta = match dp.delta {
        Some(d) => d,
        None => delta_for(private.len() as u64)?,
    };
    let q = train_config.batch_size as f64 / pairs.len() as f64;
    let steps = train_config.steps as u64;
    let sigma = match (dp.target_epsilon, dp.noise_multiplier) {
        (Some(target), _) => solve_noise_multiplier(target, delta, q, steps, dp.histogram_sigma)?,
        (None, Some(s)) => s,
        (None, None) => unreachable!("validated above"),
    };
    if sigma > 0.0 && train_config.clip.is_none() {
        return Err(Error::Config("DP noise needs a finite clip norm".into()));
    }

    let mut params = init;
    let dp_train = TrainConfig {
        noise_multiplier: sigma,
        ..train_config.clone()
    };
    let report = train(&mut params, &pairs, &dp_train)?;

    let mut ledger = AccountantLedger::new();
    ledger.record(MechanismEvent::Gaussian {
        sigma: dp.histogram_sigma,
        sensitivity: 1.0,
    });
    ledger.record(MechanismEvent::SubsampledGaussian {
        noise_multiplier: sigma,
        sampling_rate: q,
        steps,
    });
    let epsilon = compose_and_convert(&ledger, delta)?;
    Ok(FitOutput {
        params,
        histogram,
        ledger,
        noise_multiplier: sigma,
        sampling_rate: q,
        delta,
        epsilon,
        report,
        training_pairs: pairs.len(),
        dropped_unclassified: raw.unclassified(),
    })
}

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::aspects::{extract_aspects, AspectClient};
use super::condition::pretrain_condition;
use crate::corpus::{encode, Corpus, Vocabulary};
use crate::dp::{adam_step, dp_aggregate, AdamConfig, AdamState, LrSchedule};
use crate::error::{Error, Result};
use crate::model::{init_model, loss_and_grad, ModelConfig, Parameters, TrainConfig};
use crate::rng::{keyed, Stream};
use crate::topics::HashedTfIdf;

/// One (condition, document) training example as token ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pair {
    pub condition: Vec<u32>,
    pub target: Vec<u32>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean batch loss at each step, measured before that step's update.
    pub step_losses: Vec<f64>,
}

impl TrainReport {
    pub fn first_loss(&self) -> f64 {
        self.step_losses.first().copied().unwrap_or(f64::NAN)
    }

    pub fn last_loss(&self) -> f64 {
        self.step_losses.last().copied().unwrap_or(f64::NAN)
    }
}

/// The row indices drawn for `step`: `batch` distinct examples chosen
/// uniformly without replacement from the stream keyed `(seed, step)`.
pub fn batch_indices(n: usize, batch: usize, seed: u64, step: u64) -> Vec<usize> {
    index::sample(&mut keyed(seed, Stream::BatchSampling, &[step]), n, batch).into_vec()
}

/// AdamW training on `pairs`. Each step samples a batch, computes
/// per-example gradients in parallel, then clips, sums in batch order and
/// adds noise as `config` prescribes (no clipping and σ = 0 gives plain
/// Adam on the batch mean).
pub fn train(params: &mut Parameters, pairs: &[Pair], config: &TrainConfig) -> Result<TrainReport> {
    config.validate()?;
    if pairs.is_empty() {
        return Err(Error::invalid("no training examples"));
    }
    if config.batch_size > pairs.len() {
        return Err(Error::Config(format!(
            "batch size {} exceeds the {} available examples",
            config.batch_size,
            pairs.len()
        )));
    }
    let adam = AdamConfig::new(
        LrSchedule {
            peak: config.peak_lr,
            warmup: config.warmup as u64,
            total_steps: config.steps as u64,
        },
        config.weight_decay,
    );
    let mut state = AdamState::new(params.len());
    let mut report = TrainReport::default();
    for step in 0..config.steps as u64 {
        let batch = batch_indices(pairs.len(), config.batch_size, config.seed, step);
        let shared: &Parameters = params;
        let results: Vec<(f64, Vec<f64>)> = batch
            .par_iter()
            .map(|&i| loss_and_grad(shared, &pairs[i].condition, &pairs[i].target))
            .collect::<Result<_>>()?;
        let mean_loss = results.iter().map(|r| r.0).sum::<f64>() / results.len() as f64;
        report.step_losses.push(mean_loss);
        let grads: Vec<Vec<f64>> = results.into_iter().map(|r| r.1).collect();
        let update = dp_aggregate(
            &grads,
            config.clip_norm(),
            config.noise_multiplier,
            config.seed,
            step,
        )?;
        drop(grads);
        adam_step(params.as_mut_slice(), &update, &mut state, &adam)?;
    }
    if !params.is_finite() {
        return Err(Error::numeric("training produced non-finite parameters"));
    }
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct PretrainOutput {
    pub params: Parameters,
    pub report: TrainReport,
    /// Documents whose aspects came from the rule-based fallback although
    /// an external service was configured, with the reason.
    pub fallbacks: Vec<(String, String)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PretrainStyle {
    /// Condition on each document's extracted aspects.
    Aspects,
    /// Condition on the document itself with about 30% of its tokens
    /// deleted: a generic reconstruction model that knows nothing about
    /// keyword conditions.
    Denoising,
}

pub const DENOISING_KEEP: f64 = 0.7;

fn delete_tokens(ids: &[u32], seed: u64, doc: u64) -> Vec<u32> {
    let mut rng = keyed(seed, Stream::Denoising, &[doc]);
    let (first, last) = (ids[0], ids[ids.len() - 1]);
    let mut kept = vec![first];
    kept.extend(
        ids[1..ids.len() - 1]
            .iter()
            .copied()
            .filter(|_| rng.gen_bool(DENOISING_KEEP)),
    );
    kept.push(last);
    kept
}

/// Builds `(condition, document)` pairs from a public corpus; `seed` keys
/// the token deletions of the denoising style.
pub fn pretraining_pairs(
    public: &Corpus,
    idf: &HashedTfIdf,
    vocab: &Vocabulary,
    max_len: usize,
    style: PretrainStyle,
    seed: u64,
    client: Option<&dyn AspectClient>,
) -> (Vec<Pair>, Vec<(String, String)>) {
    if style == PretrainStyle::Denoising {
        let pairs = public
            .texts()
            .enumerate()
            .map(|(i, t)| {
                let target = encode(vocab, t, max_len).ids;
                Pair {
                    condition: delete_tokens(&target, seed, i as u64),
                    target,
                }
            })
            .collect();
        return (pairs, Vec::new());
    }
    let outcomes: Vec<_> = public
        .documents
        .par_iter()
        .map(|d| (d, extract_aspects(&d.text, idf, client)))
        .collect();
    let mut pairs = Vec::with_capacity(outcomes.len());
    let mut fallbacks = Vec::new();
    for (doc, outcome) in outcomes {
        if let Some(reason) = outcome.fallback {
            fallbacks.push((doc.id.clone(), reason));
        }
        let condition = pretrain_condition(&outcome.aspects);
        pairs.push(Pair {
            condition: encode(vocab, &condition, max_len).ids,
            target: encode(vocab, &doc.text, max_len).ids,
        });
    }
    (pairs, fallbacks)
}

/// Continual pretraining on public data with plain Adam: no clipping, no
/// noise, nothing recorded against any privacy budget.
pub fn pretrain_generator(
    public: &Corpus,
    idf: &HashedTfIdf,
    vocab: &Vocabulary,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    style: PretrainStyle,
    client: Option<&dyn AspectClient>,
) -> Result<PretrainOutput> {
    if public.is_empty() {
        return Err(Error::invalid("empty public corpus"));
    }
    if model_config.vocab_size != vocab.len() {
        return Err(Error::Config(format!(
            "model vocab_size {} differs from vocabulary size {}",
            model_config.vocab_size,
            vocab.len()
        )));
    }
    let mut params = init_model(model_config)?;
    let (pairs, fallbacks) = pretraining_pairs(
        public,
        idf,
        vocab,
        model_config.max_len,
        style,
        train_config.seed,
        client,
    );
    let plain = TrainConfig {
        clip: None,
        noise_multiplier: 0.0,
        ..train_config.clone()
    };
    let report = train(&mut params, &pairs, &plain)?;
    Ok(PretrainOutput {
        params,
        report,
        fallbacks,
    })
}

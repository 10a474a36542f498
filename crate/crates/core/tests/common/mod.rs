//! The two-topic toy benchmark shared by the integration and acceptance
//! tests: disjoint 50-word pools, 5000 public documents mixed 50/50, and
//! 2500 private documents mixed 70/30 split into 2000 train / 500 test.

#![allow(dead_code)]

use ctcl::corpus::{generate_toy_corpus, split_corpus, Corpus, Provenance, ToySpec, Vocabulary};
use ctcl::model::{Mode, ModelConfig, Parameters, SamplerConfig, TrainConfig};
use ctcl::pipeline::{
    evaluate, fit_private, generator_vocabulary, pretrain_generator, synthesize, DownstreamConfig,
    DpConfig, EvalReport, FitOutput, PretrainStyle, SynthesisConfig, SynthesisOutput,
};
use ctcl::topics::{fit_topics, HashedTfIdf, TopicConfig, TopicModel};

pub const POOL: usize = 50;
pub const DOC_LEN: (usize, usize) = (6, 10);
pub const PRIVATE_MIX: [f64; 2] = [0.7, 0.3];

pub struct Toy {
    pub seed: u64,
    pub public: Corpus,
    pub private: Corpus,
    pub test: Corpus,
    pub embedder: HashedTfIdf,
    pub topics: TopicModel,
    pub vocab: Vocabulary,
}

pub fn toy(seed: u64) -> Toy {
    let public_spec = ToySpec::synthetic_pools(&[0.5, 0.5], POOL, 5000, DOC_LEN, 1 + 10 * seed);
    let private_spec = ToySpec::synthetic_pools(&PRIVATE_MIX, POOL, 2500, DOC_LEN, 2 + 10 * seed);
    let public = generate_toy_corpus(&public_spec, Provenance::Public).unwrap();
    let all = generate_toy_corpus(&private_spec, Provenance::Private).unwrap();
    let mut parts = split_corpus(&all, &[0.8, 0.2], 3 + 10 * seed).unwrap();
    let test = parts.pop().unwrap();
    let private = parts.pop().unwrap();
    let embedder = HashedTfIdf::fit(&public, 256, 0);
    let topics = fit_topics(
        &public,
        &TopicConfig {
            k: 2,
            seed,
            ..TopicConfig::default()
        },
        &embedder,
    )
    .unwrap()
    .model;
    let vocab = generator_vocabulary(&public, 600).unwrap();
    Toy {
        seed,
        public,
        private,
        test,
        embedder,
        topics,
        vocab,
    }
}

pub fn model_config(mode: Mode, vocab: &Vocabulary, seed: u64) -> ModelConfig {
    ModelConfig {
        d_model: 32,
        n_layers: 1,
        n_heads: 2,
        ffn_dim: 64,
        max_len: 32,
        seed,
        ..ModelConfig::new(mode, vocab.len())
    }
}

pub fn pretrain_config(seed: u64) -> TrainConfig {
    TrainConfig {
        steps: 600,
        batch_size: 32,
        peak_lr: 3e-3,
        warmup: 60,
        seed,
        ..TrainConfig::default()
    }
}

/// DP finetuning recipe; `epsilon = None` is the non-private limit
/// (no clipping, no noise).
pub fn finetune_config(seed: u64, epsilon: Option<f64>) -> TrainConfig {
    TrainConfig {
        steps: 200,
        batch_size: 64,
        peak_lr: 1e-3,
        warmup: 20,
        clip: epsilon.map(|_| 1.0),
        seed,
        ..TrainConfig::default()
    }
}

pub fn dp_config(epsilon: Option<f64>, use_keywords: bool) -> DpConfig {
    let mut dp = match epsilon {
        Some(e) => DpConfig::with_target(e),
        None => DpConfig::with_sigma(0.0, 10.0),
    };
    dp.use_keywords = use_keywords;
    dp
}

pub fn downstream_config(vocab: &Vocabulary, seed: u64) -> DownstreamConfig {
    DownstreamConfig {
        model: model_config(Mode::DecoderOnly, vocab, seed),
        train: TrainConfig {
            steps: 300,
            batch_size: 32,
            peak_lr: 3e-3,
            warmup: 30,
            seed,
            ..TrainConfig::default()
        },
    }
}

pub fn sampler() -> SamplerConfig {
    SamplerConfig {
        max_new_tokens: 31,
        ..SamplerConfig::default()
    }
}

pub fn pretrain(t: &Toy, style: PretrainStyle) -> Parameters {
    let mc = model_config(Mode::EncoderDecoder, &t.vocab, 1 + t.seed);
    pretrain_generator(
        &t.public,
        &t.embedder,
        &t.vocab,
        &mc,
        &pretrain_config(1 + t.seed),
        style,
        None,
    )
    .unwrap()
    .params
}

pub fn fit(t: &Toy, init: &Parameters, epsilon: Option<f64>, use_keywords: bool) -> FitOutput {
    fit_private(
        &t.private,
        &t.topics,
        &t.embedder,
        &t.vocab,
        init.clone(),
        &finetune_config(2 + t.seed, epsilon),
        &dp_config(epsilon, use_keywords),
    )
    .unwrap()
}

pub fn synth(t: &Toy, fit: &FitOutput, n: usize, use_keywords: bool) -> SynthesisOutput {
    let sc = SynthesisConfig {
        sampler: sampler(),
        use_keywords,
        ..SynthesisConfig::new(n, 5 + t.seed)
    };
    synthesize(&fit.params, &t.vocab, &t.topics, &fit.histogram, &sc).unwrap()
}

pub fn eval(t: &Toy, train_corpus: &Corpus) -> EvalReport {
    evaluate(
        train_corpus,
        &t.test,
        &t.vocab,
        &downstream_config(&t.vocab, 3 + t.seed),
        &t.topics,
        &t.embedder,
    )
    .unwrap()
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Pool (topic index) of a toy word such as `t1w17`.
pub fn pool_of(word: &str) -> Option<usize> {
    let rest = word.strip_prefix('t')?;
    let (t, w) = rest.split_once('w')?;
    w.parse::<usize>().ok()?;
    t.parse().ok()
}

/// The topic whose keywords are mostly drawn from pool `pool`.
pub fn topic_for_pool(topics: &TopicModel, pool: usize) -> usize {
    (0..topics.k)
        .max_by_key(|&t| {
            topics.keywords[t]
                .iter()
                .filter(|k| pool_of(k) == Some(pool))
                .count()
        })
        .unwrap()
}

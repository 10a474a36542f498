//! Stage commands behind the `ctcl` binary. Every stage reads a JSON run
//! config, writes its outputs into the work directory and records a
//! manifest next to them. Relative paths in the config are resolved
//! against the config file's directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::corpus::{
    generate_toy_corpus, load_corpus, save_corpus, split_corpus, Corpus, Provenance, ToySpec,
    Vocabulary,
};
use crate::dp::{
    compose_and_convert, delta_for, gaussian_epsilon, solve_noise_multiplier, AccountantLedger,
    MechanismEvent, NoisyHistogram,
};
use crate::error::{Error, Result};
use crate::model::{
    init_model, load_checkpoint, save_checkpoint, Mode, ModelConfig, SamplerConfig, TrainConfig,
};
use crate::pipeline::{
    evaluate, fit_private, generator_vocabulary, pretrain_generator, synthesize, AspectClient,
    DownstreamConfig, DpConfig, HttpAspectClient, PretrainStyle, RunManifest, SynthesisConfig,
    DEFAULT_HISTOGRAM_SIGMA,
};
use crate::topics::{fit_topics, HashedTfIdf, TopicConfig, TopicModelFile};

pub const SEED_ENV: &str = "CTCL_SEED";

pub const TOPICS_FILE: &str = "topics.json";
pub const VOCAB_FILE: &str = "vocab.json";
pub const PRETRAIN_CHECKPOINT: &str = "pretrain.ckpt";
pub const FIT_CHECKPOINT: &str = "fit.ckpt";
pub const HISTOGRAM_FILE: &str = "histogram.json";
pub const SYNTHETIC_FILE: &str = "synthetic.jsonl";

pub fn manifest_file(stage: &str) -> String {
    format!("{stage}.manifest.json")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub public: Option<PathBuf>,
    pub private: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub work_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            public: None,
            private: None,
            test: None,
            work_dir: PathBuf::from("run"),
        }
    }
}

/// Transformer dimensions; mode, vocabulary size and seed are filled in by
/// the stage that builds the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelShape {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub ffn_dim: usize,
    pub max_len: usize,
}

impl Default for ModelShape {
    fn default() -> Self {
        let m = ModelConfig::new(Mode::EncoderDecoder, 0);
        Self {
            d_model: m.d_model,
            n_layers: m.n_layers,
            n_heads: m.n_heads,
            ffn_dim: m.ffn_dim,
            max_len: m.max_len,
        }
    }
}

impl ModelShape {
    pub fn build(&self, mode: Mode, vocab_size: usize, seed: u64) -> ModelConfig {
        ModelConfig {
            d_model: self.d_model,
            n_layers: self.n_layers,
            n_heads: self.n_heads,
            ffn_dim: self.ffn_dim,
            max_len: self.max_len,
            seed,
            ..ModelConfig::new(mode, vocab_size)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthesisSection {
    pub n: usize,
    pub sampler: SamplerConfig,
}

impl Default for SynthesisSection {
    fn default() -> Self {
        Self {
            n: 2000,
            sampler: SamplerConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DownstreamSection {
    pub model: ModelShape,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Every stage seed below is derived from this one.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub paths: Paths,
    #[serde(default)]
    pub topics: TopicConfig,
    /// Generator vocabulary size, special tokens included.
    #[serde(default = "RunConfig::default_vocab_size")]
    pub vocab_size: usize,
    #[serde(default)]
    pub generator: ModelShape,
    #[serde(default = "RunConfig::default_pretrain_style")]
    pub pretrain_style: PretrainStyle,
    /// Base URL of an external aspect-extraction service.
    #[serde(default)]
    pub aspect_service: Option<String>,
    #[serde(default)]
    pub pretrain: TrainConfig,
    #[serde(default)]
    pub finetune: TrainConfig,
    #[serde(default)]
    pub dp: Option<DpConfig>,
    #[serde(default)]
    pub synthesis: SynthesisSection,
    #[serde(default)]
    pub downstream: DownstreamSection,
}

impl RunConfig {
    fn default_vocab_size() -> usize {
        2000
    }

    fn default_pretrain_style() -> PretrainStyle {
        PretrainStyle::Aspects
    }

    pub fn seeds(&self) -> BTreeMap<String, u64> {
        let s = self.seed;
        [
            ("seed", s),
            ("topics", s),
            ("generator_init", s),
            ("pretrain", s),
            ("finetune", s + 1),
            ("synthesis", s + 2),
            ("downstream_init", s + 3),
            ("downstream_train", s + 4),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    fn apply_seeds(&mut self) {
        let s = self.seeds();
        self.topics.seed = s["topics"];
        self.pretrain.seed = s["pretrain"];
        self.finetune.seed = s["finetune"];
        self.downstream.train.seed = s["downstream_train"];
    }

    pub fn dp(&self) -> Result<&DpConfig> {
        self.dp
            .as_ref()
            .ok_or_else(|| Error::Config("config has no dp section".into()))
    }
}

/// A validated run config plus where to resolve its relative paths.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: RunConfig,
    pub base_dir: PathBuf,
}

fn set_path(root: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = node.as_object_mut().ok_or_else(|| {
            Error::Config(format!("--set {key}: {part:?} is not inside an object"))
        })?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    Err(Error::Config(format!("--set {key}: empty key")))
}

/// Parses `key.path=value`; the value is read as JSON when it parses and
/// as a plain string otherwise.
pub fn parse_override(s: &str) -> Result<(String, Value)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {s:?} is not of the form key=value")))?;
    let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
    Ok((k.trim().to_string(), value))
}

/// Reads the config file, then applies `CTCL_SEED`, `--set` overrides and
/// finally `--seed` (later sources win).
pub fn load_config(path: &Path, overrides: &[String], seed: Option<u64>) -> Result<Loaded> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut raw: Value = serde_json::from_str(&text)?;
    if !raw.is_object() {
        return Err(Error::Config("config must be a JSON object".into()));
    }
    if let Ok(env) = std::env::var(SEED_ENV) {
        let s: u64 = env
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("{SEED_ENV}={env:?} is not a seed")))?;
        set_path(&mut raw, "seed", s.into())?;
    }
    for o in overrides {
        let (k, v) = parse_override(o)?;
        set_path(&mut raw, &k, v)?;
    }
    if let Some(s) = seed {
        set_path(&mut raw, "seed", s.into())?;
    }
    let mut config: RunConfig = serde_json::from_value(raw)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    config.apply_seeds();
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(Loaded { config, base_dir })
}

impl Loaded {
    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn work_dir(&self) -> PathBuf {
        self.resolve(&self.config.paths.work_dir)
    }

    pub fn work_file(&self, name: &str) -> PathBuf {
        self.work_dir().join(name)
    }

    fn input(&self, field: &str, p: &Option<PathBuf>) -> Result<PathBuf> {
        let p = p
            .as_ref()
            .ok_or_else(|| Error::Config(format!("config paths.{field} is not set")))?;
        let full = self.resolve(p);
        if !full.is_file() {
            return Err(Error::Config(format!(
                "paths.{field}: {} does not exist",
                full.display()
            )));
        }
        Ok(full)
    }

    fn artifact(&self, name: &str, produced_by: &str) -> Result<PathBuf> {
        let p = self.work_file(name);
        if !p.is_file() {
            return Err(Error::Config(format!(
                "{} is missing; run `ctcl {produced_by}` first",
                p.display()
            )));
        }
        Ok(p)
    }

    fn ensure_work_dir(&self) -> Result<()> {
        let dir = self.work_dir();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))
    }

    fn manifest(&self, stage: &str) -> Result<RunManifest> {
        let mut m = RunManifest::new(stage, serde_json::to_value(&self.config)?);
        m.seeds = self.config.seeds();
        Ok(m)
    }

    fn finish(&self, manifest: &RunManifest) -> Result<()> {
        manifest.save(&self.work_file(&manifest_file(&manifest.stage)))?;
        let block = serde_json::json!({ "stage": manifest.stage, "metrics": manifest.metrics });
        println!("{}", serde_json::to_string(&block)?);
        Ok(())
    }
}

fn save_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")
        .map_err(|e| Error::io(path, e))
}

fn load_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn cmd_gen_toy(
    spec_path: &Path,
    out: &Path,
    provenance: Provenance,
    test_out: Option<&Path>,
    test_fraction: f64,
) -> Result<()> {
    let spec = ToySpec::load(spec_path)?;
    let corpus = generate_toy_corpus(&spec, provenance)?;
    match test_out {
        None => {
            save_corpus(&corpus, out)?;
            println!("wrote {} documents to {}", corpus.len(), out.display());
        }
        Some(test_path) => {
            if !(test_fraction > 0.0 && test_fraction < 1.0) {
                return Err(Error::Config(format!(
                    "test fraction {test_fraction} outside (0, 1)"
                )));
            }
            let parts = split_corpus(&corpus, &[1.0 - test_fraction, test_fraction], spec.seed)?;
            save_corpus(&parts[0], out)?;
            save_corpus(&parts[1], test_path)?;
            println!(
                "wrote {} documents to {} and {} to {}",
                parts[0].len(),
                out.display(),
                parts[1].len(),
                test_path.display()
            );
        }
    }
    Ok(())
}

fn load_topics(cfg: &Loaded) -> Result<TopicModelFile> {
    TopicModelFile::load(cfg.artifact(TOPICS_FILE, "build-topics")?)
}

pub fn cmd_build_topics(cfg: &Loaded) -> Result<RunManifest> {
    let c = &cfg.config;
    let public = load_corpus(cfg.input("public", &c.paths.public)?, Provenance::Public)?;
    cfg.ensure_work_dir()?;
    let embedder = HashedTfIdf::fit(&public, c.topics.dimension, c.topics.hash_seed);
    let fit = fit_topics(&public, &c.topics, &embedder)?;
    let file = TopicModelFile {
        model: fit.model,
        embedder,
    };
    file.save(cfg.work_file(TOPICS_FILE))?;

    let mut m = cfg.manifest("build-topics")?;
    m.metrics.insert("topics".into(), file.model.k as f64);
    m.metrics
        .insert("public_documents".into(), public.len() as f64);
    m.outputs.insert("topics".into(), TOPICS_FILE.into());
    println!(
        "fitted {} topics on {} public documents",
        file.model.k,
        public.len()
    );
    for (t, kws) in file.model.keywords.iter().enumerate() {
        println!("  topic {t}: {}", kws.join(", "));
    }
    cfg.finish(&m)?;
    Ok(m)
}

fn generator_config(cfg: &Loaded, vocab: &Vocabulary) -> ModelConfig {
    let c = &cfg.config;
    c.generator.build(
        Mode::EncoderDecoder,
        vocab.len(),
        c.seeds()["generator_init"],
    )
}

fn build_vocab(cfg: &Loaded) -> Result<Vocabulary> {
    let c = &cfg.config;
    let public = load_corpus(cfg.input("public", &c.paths.public)?, Provenance::Public)?;
    let vocab = generator_vocabulary(&public, c.vocab_size)?;
    save_json(&vocab, &cfg.work_file(VOCAB_FILE))?;
    Ok(vocab)
}

pub fn cmd_pretrain(cfg: &Loaded) -> Result<RunManifest> {
    let c = &cfg.config;
    let public = load_corpus(cfg.input("public", &c.paths.public)?, Provenance::Public)?;
    let topics = load_topics(cfg)?;
    cfg.ensure_work_dir()?;
    let vocab = generator_vocabulary(&public, c.vocab_size)?;
    save_json(&vocab, &cfg.work_file(VOCAB_FILE))?;
    let model_config = generator_config(cfg, &vocab);
    let http = c.aspect_service.as_ref().map(HttpAspectClient::new);
    let client = http.as_ref().map(|h| h as &dyn AspectClient);
    let out = pretrain_generator(
        &public,
        &topics.embedder,
        &vocab,
        &model_config,
        &c.pretrain,
        c.pretrain_style,
        client,
    )?;
    save_checkpoint(&out.params, &cfg.work_file(PRETRAIN_CHECKPOINT))?;

    let mut m = cfg.manifest("pretrain")?;
    m.metrics
        .insert("first_loss".into(), out.report.first_loss());
    m.metrics.insert("last_loss".into(), out.report.last_loss());
    m.metrics
        .insert("aspect_fallbacks".into(), out.fallbacks.len() as f64);
    m.metrics
        .insert("parameters".into(), out.params.len() as f64);
    if let Some((doc, reason)) = out.fallbacks.first() {
        m.warnings.push(format!(
            "{} documents used rule-based aspects; first was {doc}: {reason}",
            out.fallbacks.len()
        ));
    }
    m.outputs
        .insert("checkpoint".into(), PRETRAIN_CHECKPOINT.into());
    m.outputs.insert("vocabulary".into(), VOCAB_FILE.into());
    println!(
        "pretrained {} parameters for {} steps: loss {:.4} -> {:.4}",
        out.params.len(),
        c.pretrain.steps,
        out.report.first_loss(),
        out.report.last_loss()
    );
    cfg.finish(&m)?;
    Ok(m)
}

pub fn cmd_fit(cfg: &Loaded, from_scratch: bool) -> Result<RunManifest> {
    let c = &cfg.config;
    let dp = c.dp()?;
    dp.validate()?;
    let private = load_corpus(cfg.input("private", &c.paths.private)?, Provenance::Private)?;
    let topics = load_topics(cfg)?;
    cfg.ensure_work_dir()?;
    let (vocab, init) = if from_scratch {
        let vocab = match cfg.work_file(VOCAB_FILE) {
            p if p.is_file() => load_json(&p)?,
            _ => build_vocab(cfg)?,
        };
        let init = init_model(&generator_config(cfg, &vocab))?;
        (vocab, init)
    } else {
        let ckpt = cfg.artifact(PRETRAIN_CHECKPOINT, "pretrain")?;
        let vocab: Vocabulary = load_json(&cfg.artifact(VOCAB_FILE, "pretrain")?)?;
        (vocab, load_checkpoint(&ckpt)?)
    };
    if init.config().vocab_size != vocab.len() {
        return Err(Error::Config(
            "checkpoint and vocabulary sizes differ".into(),
        ));
    }
    let out = fit_private(
        &private,
        &topics.model,
        &topics.embedder,
        &vocab,
        init,
        &c.finetune,
        dp,
    )?;
    save_checkpoint(&out.params, &cfg.work_file(FIT_CHECKPOINT))?;
    save_json(&out.histogram, &cfg.work_file(HISTOGRAM_FILE))?;

    let mut m = cfg.manifest("fit")?;
    m.ledger = Some(out.ledger.clone());
    m.epsilon = Some(out.epsilon);
    m.delta = Some(out.delta);
    for (k, v) in [
        ("noise_multiplier", out.noise_multiplier),
        ("sampling_rate", out.sampling_rate),
        ("first_loss", out.report.first_loss()),
        ("last_loss", out.report.last_loss()),
        ("training_pairs", out.training_pairs as f64),
        ("dropped_unclassified", out.dropped_unclassified as f64),
    ] {
        m.metrics.insert(k.into(), v);
    }
    if out.epsilon.is_infinite() {
        m.warnings
            .push("epsilon is infinite: at least one release was noiseless".into());
    }
    m.outputs.insert("checkpoint".into(), FIT_CHECKPOINT.into());
    m.outputs.insert("histogram".into(), HISTOGRAM_FILE.into());
    println!(
        "finetuned on {} private pairs ({} unclassified dropped), noise multiplier {:.4}, q = {:.5}",
        out.training_pairs, out.dropped_unclassified, out.noise_multiplier, out.sampling_rate
    );
    println!(
        "PRIVACY: ({}, {:.4e})-DP",
        fmt_epsilon(out.epsilon),
        out.delta
    );
    if out.epsilon.is_infinite() {
        println!("warning: epsilon = inf, this run gives no privacy guarantee");
    }
    cfg.finish(&m)?;
    Ok(m)
}

fn fmt_epsilon(eps: f64) -> String {
    if eps.is_infinite() {
        "epsilon = inf".into()
    } else {
        format!("epsilon = {eps:.4}")
    }
}

/// Synthesis reads only DP-released artifacts: the fit checkpoint, the
/// noisy histogram and the fit manifest's ledger, plus public ones.
pub fn cmd_synth(cfg: &Loaded) -> Result<RunManifest> {
    let c = &cfg.config;
    let fit_manifest_path = cfg.work_file(&manifest_file("fit"));
    let fit_manifest = if fit_manifest_path.is_file() {
        RunManifest::load(&fit_manifest_path)?
    } else {
        return Err(Error::Config(format!(
            "missing DP artifacts: no fit manifest at {}",
            fit_manifest_path.display()
        )));
    };
    let ledger: AccountantLedger = fit_manifest.ledger.clone().ok_or_else(|| {
        Error::Config("missing DP artifacts: the fit manifest has no privacy ledger".into())
    })?;
    let params = load_checkpoint(&cfg.artifact(FIT_CHECKPOINT, "fit")?)?;
    let histogram: NoisyHistogram = load_json(&cfg.artifact(HISTOGRAM_FILE, "fit")?)?;
    let vocab: Vocabulary = load_json(&cfg.artifact(VOCAB_FILE, "pretrain")?)?;
    let topics = load_topics(cfg)?;
    let dp = c.dp()?;
    let sc = SynthesisConfig {
        n: c.synthesis.n,
        sampler: c.synthesis.sampler,
        seed: c.seeds()["synthesis"],
        document_type: dp.document_type.clone(),
        use_keywords: dp.use_keywords,
    };
    let out = synthesize(&params, &vocab, &topics.model, &histogram, &sc)?;
    save_corpus(&out.corpus, cfg.work_file(SYNTHETIC_FILE))?;

    let mut m = cfg.manifest("synth")?;
    m.ledger = Some(ledger);
    m.epsilon = fit_manifest.epsilon;
    m.delta = fit_manifest.delta;
    m.metrics
        .insert("documents".into(), out.corpus.len() as f64);
    for (t, n) in out.plan.counts.iter().enumerate() {
        m.metrics.insert(format!("topic_{t}_documents"), *n as f64);
    }
    m.warnings = out.warnings;
    m.outputs.insert("corpus".into(), SYNTHETIC_FILE.into());
    println!(
        "generated {} documents, per topic {:?}",
        out.corpus.len(),
        out.plan.counts
    );
    cfg.finish(&m)?;
    Ok(m)
}

/// Trains the downstream model on the synthetic corpus, or on `train` when
/// given, and scores it on the test corpus.
pub fn cmd_eval(cfg: &Loaded, train: Option<&Path>) -> Result<RunManifest> {
    let c = &cfg.config;
    let test = load_corpus(cfg.input("test", &c.paths.test)?, Provenance::Private)?;
    let (train_path, provenance) = match train {
        Some(p) => (p.to_path_buf(), Provenance::Private),
        None => (
            cfg.artifact(SYNTHETIC_FILE, "synth")?,
            Provenance::Synthetic,
        ),
    };
    let train_corpus: Corpus = load_corpus(&train_path, provenance)?;
    let vocab: Vocabulary = load_json(&cfg.artifact(VOCAB_FILE, "pretrain")?)?;
    let topics = load_topics(cfg)?;
    let seeds = c.seeds();
    let downstream = DownstreamConfig {
        model: c
            .downstream
            .model
            .build(Mode::DecoderOnly, vocab.len(), seeds["downstream_init"]),
        train: c.downstream.train.clone(),
    };
    let mut report = evaluate(
        &train_corpus,
        &test,
        &vocab,
        &downstream,
        &topics.model,
        &topics.embedder,
    )?;

    let mut m = cfg.manifest("eval")?;
    if train.is_none() {
        let synth = RunManifest::load(&cfg.work_file(&manifest_file("synth")))?;
        report.composed_epsilon = synth.epsilon;
        m.epsilon = synth.epsilon;
        m.delta = synth.delta;
    }
    m.metrics
        .insert("next_word_accuracy".into(), report.next_word_accuracy);
    m.metrics.insert("perplexity".into(), report.perplexity);
    m.metrics
        .insert("topic_js_divergence".into(), report.topic_js_divergence);
    m.metrics
        .insert("train_documents".into(), report.train_documents as f64);
    m.metrics
        .insert("test_positions".into(), report.test_positions as f64);
    let name = train_path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    m.outputs.insert("train_corpus".into(), name);
    println!(
        "next-word accuracy {:.4}, perplexity {:.3}, topic JS divergence {:.5} nats",
        report.next_word_accuracy, report.perplexity, report.topic_js_divergence
    );
    cfg.finish(&m)?;
    Ok(m)
}

#[derive(Debug, Clone, Default)]
pub struct AccountArgs {
    pub n: Option<u64>,
    pub delta: Option<f64>,
    pub sigma: Option<f64>,
    pub q: Option<f64>,
    pub steps: Option<u64>,
    pub hist_sigma: Option<f64>,
    pub target_eps: Option<f64>,
}

/// Prints δ, the histogram's analytic-Gaussian ε, and either the solved
/// noise multiplier (`--target-eps`) or the composed ε (`--sigma`).
/// Returns the machine-readable report.
pub fn cmd_account(args: &AccountArgs) -> Result<Value> {
    let delta = match (args.delta, args.n) {
        (Some(d), _) => d,
        (None, Some(n)) => delta_for(n)?,
        (None, None) => return Err(Error::Config("pass --n or --delta".into())),
    };
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Config(format!("delta {delta} outside (0, 1)")));
    }
    let hist_sigma = args.hist_sigma.unwrap_or(DEFAULT_HISTOGRAM_SIGMA);
    let mut report = serde_json::Map::new();
    match args.n {
        Some(n) if args.delta.is_none() => {
            println!("delta = {delta:.4e} (1 / (N ln N) with N = {n})")
        }
        _ => println!("delta = {delta:.4e}"),
    }
    report.insert("delta".into(), delta.into());
    report.insert("histogram_sigma".into(), hist_sigma.into());
    if hist_sigma > 0.0 {
        let eps = gaussian_epsilon(hist_sigma, 1.0, delta)?;
        println!(
            "histogram epsilon = {eps:.4} (analytic Gaussian, sigma = {hist_sigma}, sensitivity 1)"
        );
        report.insert("histogram_epsilon".into(), eps.into());
    } else {
        println!("warning: histogram sigma 0 gives epsilon = inf");
    }
    let training = |what: &str| -> Result<(f64, u64)> {
        match (args.q, args.steps) {
            (Some(q), Some(t)) if q > 0.0 && q <= 1.0 && t > 0 => Ok((q, t)),
            (Some(_), Some(_)) => Err(Error::Config(
                "--q must lie in (0, 1] and --steps be positive".into(),
            )),
            _ => Err(Error::Config(format!("{what} needs --q and --steps"))),
        }
    };
    if let Some(target) = args.target_eps {
        let (q, steps) = training("--target-eps")?;
        let sigma = solve_noise_multiplier(target, delta, q, steps, hist_sigma)?;
        println!("noise multiplier for composed epsilon {target}: sigma = {sigma:.4} (q = {q}, {steps} steps)");
        report.insert("target_epsilon".into(), target.into());
        report.insert("noise_multiplier".into(), sigma.into());
    }
    if let Some(sigma) = args.sigma {
        let (q, steps) = training("--sigma")?;
        let mut ledger = AccountantLedger::new();
        ledger.record(MechanismEvent::Gaussian {
            sigma: hist_sigma,
            sensitivity: 1.0,
        });
        ledger.record(MechanismEvent::SubsampledGaussian {
            noise_multiplier: sigma,
            sampling_rate: q,
            steps,
        });
        let eps = compose_and_convert(&ledger, delta)?;
        if eps.is_infinite() {
            println!("warning: epsilon = inf, a noiseless release gives no privacy");
            report.insert("epsilon".into(), "inf".into());
        } else {
            println!("composed epsilon = {eps:.4} (sigma = {sigma}, q = {q}, {steps} steps, plus histogram)");
            report.insert("epsilon".into(), eps.into());
        }
    }
    let report = Value::Object(report);
    println!("{}", serde_json::to_string(&report)?);
    Ok(report)
}

//! The end-to-end flow: public pretraining pairs and generator pretraining,
//! the private stage (noisy topic histogram plus DP finetuning, both
//! recorded in a ledger), topic-proportional synthesis from released
//! artifacts only, and downstream evaluation.

mod aspects;
mod condition;
mod evaluate;
mod manifest;
mod private;
mod synth;
mod train;

pub use aspects::{
    document_type, extract_aspects, keyword_budget, parse_aspect_reply, rule_based_aspects,
    tfidf_keywords, AspectClient, AspectOutcome, AspectSet, HttpAspectClient, ASPECT_KEYWORDS,
    WORDS_PER_KEYWORD,
};
pub use condition::{build_condition, finetune_condition, pretrain_condition, ConditionMode};
pub use evaluate::{
    encode_corpus, evaluate, js_divergence, train_downstream, DownstreamConfig, EvalReport,
};
pub use manifest::{config_hash, extended_float, RunManifest};
pub use private::{finetune_pairs, fit_private, DpConfig, FitOutput, DEFAULT_HISTOGRAM_SIGMA};
pub use synth::{
    allocate_counts, synthesize, topic_proportions, SynthesisConfig, SynthesisOutput,
    SynthesisPlan, EMPTY_PLACEHOLDER, GENERATION_RETRIES,
};
pub use train::{
    batch_indices, pretrain_generator, pretraining_pairs, train, Pair, PretrainOutput,
    PretrainStyle, TrainReport,
};

use crate::corpus::{tokenize, Corpus, Vocabulary, NUM_SPECIALS};
use crate::error::Result;

/// Tokens every condition line can contain.
const CONDITION_SCAFFOLD: &str = "Document Type: article dialogue list Keywords: ,";

/// Generator vocabulary: the most frequent public tokens plus the condition
/// scaffolding, at most `max_size` entries including specials.
pub fn generator_vocabulary(public: &Corpus, max_size: usize) -> Result<Vocabulary> {
    let scaffold: Vec<String> = {
        let mut seen = Vec::new();
        for t in tokenize(CONDITION_SCAFFOLD) {
            if !seen.contains(&t) {
                seen.push(t);
            }
        }
        seen
    };
    let base = Vocabulary::build(
        public.texts(),
        max_size
            .saturating_sub(scaffold.len())
            .max(NUM_SPECIALS + 1),
        1,
    )?;
    let mut words = base.words().to_vec();
    for t in scaffold {
        if !base.contains(&t) {
            words.push(t);
        }
    }
    Vocabulary::from_tokens(words)
}

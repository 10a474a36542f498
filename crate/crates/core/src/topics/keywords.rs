use std::collections::{BTreeMap, HashMap, HashSet};

use crate::corpus::{tokenize, Corpus};

pub const KEYWORDS_PER_TOPIC: usize = 10;
pub const STOP_TOKEN_COUNT: usize = 25;

#[derive(Debug, Clone, PartialEq)]
pub struct KeywordExtraction {
    pub keywords: Vec<Vec<String>>,
    /// Topics that had no documents and therefore no keywords.
    pub empty_topics: Vec<usize>,
}

/// The `n` most frequent tokens of a corpus, ties broken lexicographically.
pub fn most_frequent_tokens(corpus: &Corpus, n: usize) -> HashSet<String> {
    let mut counts: HashMap<String, usize> = HashMap::new();
    for text in corpus.texts() {
        for t in tokenize(text) {
            *counts.entry(t).or_default() += 1;
        }
    }
    let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.into_iter().take(n).map(|(t, _)| t).collect()
}

/// Class-based TF-IDF score `tf(t,c) · ln(1 + A / f(t))`, where `A` is the
/// mean number of tokens per cluster and `f(t)` the token's total count.
pub fn class_tfidf(cluster_counts: &[BTreeMap<String, usize>]) -> Vec<BTreeMap<String, f64>> {
    let mut total: HashMap<&str, usize> = HashMap::new();
    let mut all_tokens = 0usize;
    for counts in cluster_counts {
        for (t, &c) in counts {
            *total.entry(t.as_str()).or_default() += c;
            all_tokens += c;
        }
    }
    let avg = all_tokens as f64 / cluster_counts.len().max(1) as f64;
    cluster_counts
        .iter()
        .map(|counts| {
            counts
                .iter()
                .map(|(t, &c)| {
                    let f = total[t.as_str()] as f64;
                    (t.clone(), c as f64 * (1.0 + avg / f).ln())
                })
                .collect()
        })
        .collect()
}

/// Top-10 c-TF-IDF tokens per topic, skipping stop tokens and tokens with
/// no alphanumeric character. `assignments[i]` is the topic of document `i`
/// (or `None` when it takes no part).
pub fn extract_keywords(
    corpus: &Corpus,
    assignments: &[Option<usize>],
    k: usize,
    stop_tokens: &HashSet<String>,
) -> KeywordExtraction {
    let mut cluster_counts = vec![BTreeMap::<String, usize>::new(); k];
    let mut doc_counts = vec![0usize; k];
    for (doc, a) in corpus.documents.iter().zip(assignments) {
        let Some(topic) = *a else { continue };
        doc_counts[topic] += 1;
        for t in tokenize(&doc.text) {
            *cluster_counts[topic].entry(t).or_default() += 1;
        }
    }
    let scores = class_tfidf(&cluster_counts);
    let keywords = scores
        .into_iter()
        .map(|s| {
            let mut ranked: Vec<(String, f64)> = s
                .into_iter()
                .filter(|(t, score)| {
                    *score > 0.0 && !stop_tokens.contains(t) && t.chars().any(char::is_alphanumeric)
                })
                .collect();
            ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            ranked
                .into_iter()
                .take(KEYWORDS_PER_TOPIC)
                .map(|(t, _)| t)
                .collect()
        })
        .collect();
    let empty_topics = (0..k).filter(|&c| doc_counts[c] == 0).collect();
    KeywordExtraction {
        keywords,
        empty_topics,
    }
}

use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::corpus::tokenize;
use crate::error::{Error, Result};
use crate::topics::HashedTfIdf;

pub const ASPECT_KEYWORDS: usize = 5;
pub const WORDS_PER_KEYWORD: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AspectSet {
    pub keywords: Vec<String>,
    pub doc_type: String,
    /// Further `Aspect: value` lines, rendered after the required ones.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub extra: Vec<String>,
}

/// Result of aspect extraction; `fallback` names why the external service
/// was not used when one was configured.
#[derive(Debug, Clone, PartialEq)]
pub struct AspectOutcome {
    pub aspects: AspectSet,
    pub fallback: Option<String>,
}

/// An external service that describes a document in `Aspect: value` lines.
pub trait AspectClient: Sync {
    fn describe(&self, text: &str) -> Result<String>;
}

/// `POST {base}/extract` with `{"text": ...}`, expecting `{"text": ...}` back.
#[derive(Debug, Clone)]
pub struct HttpAspectClient {
    base_url: String,
    agent: ureq::Agent,
}

impl HttpAspectClient {
    pub const TIMEOUT: Duration = Duration::from_secs(5);

    pub fn new(base_url: impl Into<String>) -> Self {
        Self::with_timeout(base_url, Self::TIMEOUT)
    }

    pub fn with_timeout(base_url: impl Into<String>, timeout: Duration) -> Self {
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
        }
    }
}

#[derive(Deserialize)]
struct ServiceReply {
    text: String,
}

impl AspectClient for HttpAspectClient {
    fn describe(&self, text: &str) -> Result<String> {
        let url = format!("{}/extract", self.base_url);
        let reply: ServiceReply = self
            .agent
            .post(&url)
            .send_json(serde_json::json!({ "text": text }))
            .map_err(|e| Error::invalid(format!("aspect service request failed: {e}")))?
            .into_json()
            .map_err(|e| Error::invalid(format!("aspect service reply unreadable: {e}")))?;
        Ok(reply.text)
    }
}

fn is_turn_prefix(line: &str) -> bool {
    let Some((speaker, _)) = line.split_once(':') else {
        return false;
    };
    let speaker = speaker.trim();
    !speaker.is_empty()
        && speaker.len() <= 20
        && speaker.split_whitespace().count() <= 3
        && speaker
            .chars()
            .all(|c| c.is_alphanumeric() || c == ' ' || c == '_')
}

fn is_list_item(line: &str) -> bool {
    if line.starts_with(['-', '*', '•']) {
        return true;
    }
    let digits = line.chars().take_while(char::is_ascii_digit).count();
    digits > 0 && line[digits..].starts_with(['.', ')'])
}

/// "dialogue" when at least two lines open with a speaker turn such as
/// `A:`, "list" when at least two lines are bullets or numbered items,
/// otherwise "article".
pub fn document_type(text: &str) -> &'static str {
    let lines: Vec<&str> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect();
    if lines.iter().filter(|l| is_turn_prefix(l)).count() >= 2 {
        "dialogue"
    } else if lines.iter().filter(|l| is_list_item(l)).count() >= 2 {
        "list"
    } else {
        "article"
    }
}

/// Top TF-IDF tokens of one document (score desc, then lexicographic).
pub fn tfidf_keywords(text: &str, idf: &HashedTfIdf, n: usize) -> Vec<String> {
    let mut tf: BTreeMap<String, f64> = BTreeMap::new();
    for t in tokenize(text) {
        if t.chars().any(char::is_alphanumeric) {
            *tf.entry(t).or_default() += 1.0;
        }
    }
    let mut scored: Vec<(String, f64)> = tf
        .into_iter()
        .map(|(t, c)| {
            let s = c * idf.idf(&t);
            (t, s)
        })
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored.into_iter().take(n).map(|(t, _)| t).collect()
}

/// One keyword per `WORDS_PER_KEYWORD` words, between 1 and
/// `ASPECT_KEYWORDS`, so that aspects summarise a short document rather
/// than spell most of it out.
pub fn keyword_budget(text: &str) -> usize {
    let words = tokenize(text)
        .iter()
        .filter(|t| t.chars().any(char::is_alphanumeric))
        .count();
    (words / WORDS_PER_KEYWORD).clamp(1, ASPECT_KEYWORDS)
}

pub fn rule_based_aspects(text: &str, idf: &HashedTfIdf) -> AspectSet {
    AspectSet {
        keywords: tfidf_keywords(text, idf, keyword_budget(text)),
        doc_type: document_type(text).to_string(),
        extra: Vec::new(),
    }
}

/// Reads `Keywords:` and `Document Type:` lines (case-insensitive labels);
/// other `Label: value` lines are kept as extras. Both required lines must
/// be present and non-empty.
pub fn parse_aspect_reply(reply: &str) -> Option<AspectSet> {
    let mut keywords = None;
    let mut doc_type = None;
    let mut extra = Vec::new();
    for line in reply.lines().map(str::trim).filter(|l| !l.is_empty()) {
        let Some((label, value)) = line.split_once(':') else {
            continue;
        };
        let value = value.trim();
        match label.trim().to_lowercase().as_str() {
            "keywords" => {
                let kws: Vec<String> = value
                    .split(',')
                    .map(|k| k.trim().to_lowercase())
                    .filter(|k| !k.is_empty())
                    .collect();
                keywords = Some(kws);
            }
            "document type" => doc_type = Some(value.to_lowercase()),
            _ => extra.push(format!("{}: {}", label.trim(), value)),
        }
    }
    match (keywords, doc_type) {
        (Some(k), Some(d)) if !k.is_empty() && !d.is_empty() => Some(AspectSet {
            keywords: k,
            doc_type: d,
            extra,
        }),
        _ => None,
    }
}

/// Describes a document. With a client, its reply is used when it parses;
/// any failure falls back to the rule-based extractor and says why.
pub fn extract_aspects(
    text: &str,
    idf: &HashedTfIdf,
    client: Option<&dyn AspectClient>,
) -> AspectOutcome {
    let Some(client) = client else {
        return AspectOutcome {
            aspects: rule_based_aspects(text, idf),
            fallback: None,
        };
    };
    let reason = match client.describe(text) {
        Ok(reply) => match parse_aspect_reply(&reply) {
            Some(aspects) => {
                return AspectOutcome {
                    aspects,
                    fallback: None,
                }
            }
            None => "aspect service reply lacked Keywords/Document Type lines".to_string(),
        },
        Err(e) => e.to_string(),
    };
    AspectOutcome {
        aspects: rule_based_aspects(text, idf),
        fallback: Some(reason),
    }
}

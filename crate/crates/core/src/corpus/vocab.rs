use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PAD: u32 = 0;
pub const BOS: u32 = 1;
pub const EOS: u32 = 2;
pub const UNK: u32 = 3;
pub const SEP: u32 = 4;
pub const NUM_SPECIALS: usize = 5;
const SPECIAL_NAMES: [&str; NUM_SPECIALS] = ["<pad>", "<bos>", "<eos>", "<unk>", "<sep>"];

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '-' || c == '\''
}

/// Lowercases, splits on whitespace, and splits punctuation off words so
/// that `"Keywords: a, b"` becomes `["keywords", ":", "a", ",", "b"]`.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let lower = chunk.to_lowercase();
        let mut word = String::new();
        for c in lower.chars() {
            if is_word_char(c) {
                word.push(c);
            } else {
                if !word.is_empty() {
                    out.push(std::mem::take(&mut word));
                }
                out.push(c.to_string());
            }
        }
        if !word.is_empty() {
            out.push(word);
        }
    }
    out
}

/// Word-level vocabulary. Ids 0..=4 are PAD, BOS, EOS, UNK, SEP; ordinary
/// tokens start at 5.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

#[derive(Serialize, Deserialize)]
struct VocabularyFile {
    tokens: Vec<String>,
}

impl Serialize for Vocabulary {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        VocabularyFile {
            tokens: self.tokens[NUM_SPECIALS..].to_vec(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Vocabulary {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let file = VocabularyFile::deserialize(d)?;
        Vocabulary::from_tokens(file.tokens).map_err(serde::de::Error::custom)
    }
}

impl Vocabulary {
    /// Builds from ordinary tokens listed in id order (ids 5, 6, ...).
    pub fn from_tokens(words: Vec<String>) -> Result<Self> {
        let mut tokens: Vec<String> = SPECIAL_NAMES.iter().map(|s| s.to_string()).collect();
        tokens.extend(words);
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(Error::invalid(format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(Self { tokens, index })
    }

    /// Counts tokens over `texts`, drops those seen fewer than `min_count`
    /// times, ranks by (count desc, token asc) and keeps enough to make the
    /// total size (specials included) at most `max_size`.
    pub fn build<'a>(
        texts: impl IntoIterator<Item = &'a str>,
        max_size: usize,
        min_count: usize,
    ) -> Result<Self> {
        if max_size < NUM_SPECIALS + 1 {
            return Err(Error::invalid(format!(
                "max_size must be at least {}",
                NUM_SPECIALS + 1
            )));
        }
        let mut counts: HashMap<String, usize> = HashMap::new();
        for text in texts {
            for tok in tokenize(text) {
                *counts.entry(tok).or_default() += 1;
            }
        }
        let mut ranked: Vec<(String, usize)> = counts
            .into_iter()
            .filter(|(t, c)| *c >= min_count && !SPECIAL_NAMES.contains(&t.as_str()))
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(max_size - NUM_SPECIALS);
        Self::from_tokens(ranked.into_iter().map(|(t, _)| t).collect())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn is_special(id: u32) -> bool {
        (id as usize) < NUM_SPECIALS
    }

    /// Ordinary tokens in id order.
    pub fn words(&self) -> &[String] {
        &self.tokens[NUM_SPECIALS..]
    }
}

/// Token ids bounded by a maximum length.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// `[BOS, tokens..., EOS]`, cut to `max_len` while keeping EOS last.
pub fn encode(vocab: &Vocabulary, text: &str, max_len: usize) -> TokenSequence {
    let max_len = max_len.max(2);
    let mut ids = Vec::with_capacity(max_len);
    ids.push(BOS);
    ids.extend(tokenize(text).iter().take(max_len - 2).map(|t| vocab.id(t)));
    ids.push(EOS);
    TokenSequence { ids }
}

/// Joins ordinary tokens with single spaces. UNK renders as `<unk>`; the
/// other specials are dropped.
pub fn decode(vocab: &Vocabulary, seq: &TokenSequence) -> Result<String> {
    let mut words = Vec::with_capacity(seq.len());
    for &id in &seq.ids {
        let tok = vocab.token(id).ok_or_else(|| {
            Error::invalid(format!(
                "token id {id} out of range for vocabulary of {}",
                vocab.len()
            ))
        })?;
        if id == UNK || !Vocabulary::is_special(id) {
            words.push(tok);
        }
    }
    Ok(words.join(" "))
}

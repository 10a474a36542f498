//! Corpora, tokenisation and vocabularies, plus a generator for toy corpora
//! with known topic structure.

mod toy;
mod vocab;

pub use toy::{generate_toy_corpus, ToySpec, ToyTopic};
pub use vocab::{
    decode, encode, tokenize, TokenSequence, Vocabulary, BOS, EOS, NUM_SPECIALS, PAD, SEP, UNK,
};

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{keyed, Stream};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_topic: Option<usize>,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            label: None,
            true_topic: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Public,
    Private,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub documents: Vec<Document>,
    pub provenance: Provenance,
}

impl Corpus {
    pub fn new(documents: Vec<Document>, provenance: Provenance) -> Self {
        Self {
            documents,
            provenance,
        }
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.documents.iter().map(|d| d.text.as_str())
    }

    /// Serialises as JSON lines, one document per line.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for doc in &self.documents {
            out.push_str(&serde_json::to_string(doc)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_jsonl(content: &str, provenance: Provenance) -> Result<Self> {
        #[derive(Deserialize)]
        struct Record {
            id: Option<String>,
            text: String,
            label: Option<String>,
            true_topic: Option<usize>,
        }

        let mut documents = Vec::new();
        let mut seen = HashSet::new();
        for (idx, line) in content.lines().enumerate() {
            let line_no = idx + 1;
            let rec: Record = serde_json::from_str(line).map_err(|e| Error::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
            if rec.text.trim().is_empty() {
                return Err(Error::Parse {
                    line: line_no,
                    message: "empty \"text\"".into(),
                });
            }
            let id = rec.id.unwrap_or_else(|| format!("{line_no:08}"));
            if !seen.insert(id.clone()) {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("duplicate id {id:?}"),
                });
            }
            documents.push(Document {
                id,
                text: rec.text,
                label: rec.label,
                true_topic: rec.true_topic,
            });
        }
        if documents.is_empty() {
            return Err(Error::invalid("empty corpus"));
        }
        Ok(Self::new(documents, provenance))
    }
}

/// Reads a JSON-lines corpus, keeping file order. Documents without an
/// `"id"` get their 1-based line number, zero-padded to eight digits.
pub fn load_corpus(path: impl AsRef<Path>, provenance: Provenance) -> Result<Corpus> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Corpus::from_jsonl(&content, provenance).map_err(|e| match e {
        Error::InvalidInput(msg) => Error::invalid(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn save_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(corpus.to_jsonl()?.as_bytes())
        .map_err(|e| Error::io(path, e))
}

/// Shuffles deterministically from `seed`, then cuts contiguous pieces of
/// size `floor(f_i · n)`; leftover documents go to the first piece.
pub fn split_corpus(corpus: &Corpus, fractions: &[f64], seed: u64) -> Result<Vec<Corpus>> {
    if fractions.is_empty() || fractions.iter().any(|&f| !(f > 0.0)) {
        return Err(Error::invalid("split fractions must be positive"));
    }
    let total: f64 = fractions.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "split fractions sum to {total}, expected 1"
        )));
    }
    let n = corpus.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut keyed(seed, Stream::Split, &[]));

    let mut sizes: Vec<usize> = fractions
        .iter()
        .map(|f| (f * n as f64).floor() as usize)
        .collect();
    let assigned: usize = sizes.iter().sum();
    sizes[0] += n - assigned;

    let mut pieces = Vec::with_capacity(sizes.len());
    let mut start = 0;
    for size in sizes {
        let docs = order[start..start + size]
            .iter()
            .map(|&i| corpus.documents[i].clone())
            .collect();
        pieces.push(Corpus::new(docs, corpus.provenance));
        start += size;
    }
    Ok(pieces)
}

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{tokenize, Corpus};

/// Maps a document to a fixed-dimension vector.
pub trait Embedder: Sync {
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> Vec<f64>;
}

/// Feature hashing of TF-IDF weights with a signed hash, L2-normalised.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HashedTfIdf {
    pub dimension: usize,
    pub hash_seed: u64,
    pub idf: BTreeMap<String, f64>,
    /// IDF used for tokens absent from the table.
    pub default_idf: f64,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 33)).wrapping_mul(0xff51_afd7_ed55_8ccd);
    z = (z ^ (z >> 33)).wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    z ^ (z >> 33)
}

impl HashedTfIdf {
    /// Smoothed IDF `ln((1 + N) / (1 + df)) + 1` from a (public) corpus.
    pub fn fit(corpus: &Corpus, dimension: usize, hash_seed: u64) -> Self {
        let n = corpus.len() as f64;
        let mut df: HashMap<String, usize> = HashMap::new();
        for text in corpus.texts() {
            let unique: HashSet<String> = tokenize(text).into_iter().collect();
            for t in unique {
                *df.entry(t).or_default() += 1;
            }
        }
        let idf = df
            .into_iter()
            .map(|(t, d)| (t, ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0))
            .collect();
        Self {
            dimension,
            hash_seed,
            idf,
            default_idf: (1.0 + n).ln() + 1.0,
        }
    }

    pub fn idf(&self, token: &str) -> f64 {
        self.idf.get(token).copied().unwrap_or(self.default_idf)
    }

    /// Bucket in `[0, dimension)` and sign for a token.
    pub fn bucket(&self, token: &str) -> (usize, f64) {
        let h = mix(fnv1a(token.as_bytes()) ^ mix(self.hash_seed));
        let bucket = (h % self.dimension as u64) as usize;
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        (bucket, sign)
    }
}

impl Embedder for HashedTfIdf {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Vec<f64> {
        let mut tf: BTreeMap<String, f64> = BTreeMap::new();
        for t in tokenize(text) {
            *tf.entry(t).or_default() += 1.0;
        }
        let mut v = vec![0.0; self.dimension];
        for (tok, count) in &tf {
            let (b, sign) = self.bucket(tok);
            v[b] += sign * count * self.idf(tok);
        }
        normalise(&mut v);
        v
    }
}

/// Scales to unit L2 norm; leaves the zero vector alone.
pub fn normalise(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn is_zero(v: &[f64]) -> bool {
    v.iter().all(|&x| x == 0.0)
}

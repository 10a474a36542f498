//! Counter-based random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 stream whose key is
//! derived from a run seed plus a tuple of counters (step, example, bin,
//! position, ...). A draw therefore depends only on *where* it sits in the
//! computation, never on the order in which threads happen to reach it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Domain tags keep streams for different purposes disjoint even when the
/// remaining counters coincide.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    ToyCorpus = 1,
    Split = 2,
    KMeansInit = 3,
    HistogramNoise = 4,
    GradientNoise = 5,
    BatchSampling = 6,
    Sampling = 7,
    ModelInit = 8,
    Synthesis = 9,
    Training = 10,
    Denoising = 11,
}

const fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a seed, a domain tag and any number of counters into a 64-bit key.
pub fn derive_key(seed: u64, stream: Stream, counters: &[u64]) -> u64 {
    let mut h = splitmix64(seed ^ splitmix64(stream as u64));
    for (i, &c) in counters.iter().enumerate() {
        h = splitmix64(h ^ splitmix64(c.wrapping_add((i as u64 + 1) << 56)));
    }
    h
}

/// A fresh generator keyed on `(seed, stream, counters)`.
pub fn keyed(seed: u64, stream: Stream, counters: &[u64]) -> ChaCha8Rng {
    let key = derive_key(seed, stream, counters);
    let mut bytes = [0u8; 32];
    for (i, chunk) in bytes.chunks_mut(8).enumerate() {
        chunk.copy_from_slice(&splitmix64(key.wrapping_add(i as u64)).to_le_bytes());
    }
    ChaCha8Rng::from_seed(bytes)
}

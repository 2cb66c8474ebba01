//! Seed derivation for independent random streams.
//!
//! Every stochastic task (a subject in the generator, a k-means restart, a CV
//! repeat) draws from its own ChaCha8 stream. The 256-bit key is expanded from
//! the user seed by SplitMix64; the 64-bit stream id is derived from a domain
//! tag and the task index. Results therefore do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream domains. Distinct values keep unrelated tasks decorrelated.
#[derive(Debug, Clone, Copy)]
#[repr(u32)]
pub enum Domain {
    SynthSubject = 1,
    SynthPattern = 2,
    KMeansRestart = 3,
    CvSplit = 4,
}

#[inline]
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix several words into one seed.
pub fn mix(parts: &[u64]) -> u64 {
    let mut s = 0x6A09_E667_F3BC_C908u64;
    let mut out = 0u64;
    for &p in parts {
        s ^= p;
        out = splitmix64(&mut s);
    }
    out
}

/// Independent generator for task `index` of `domain` under `seed`.
pub fn stream(seed: u64, domain: Domain, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let mut s = seed;
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut s).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(mix(&[domain as u64, index]));
    rng
}

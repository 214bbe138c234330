//! Deterministic random sub-streams.
//!
//! A stream is keyed by the run seed, a purpose label and any number of
//! integer ids, so draws for one purpose never shift when another purpose
//! consumes more or fewer numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    hash
}

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn substream_seed(seed: u64, purpose: &str, ids: &[u64]) -> u64 {
    let mut key = mix64(seed ^ 0x9E37_79B9_7F4A_7C15) ^ fnv1a64(purpose.as_bytes());
    for &id in ids {
        key = mix64(key ^ mix64(id.wrapping_add(0xD134_2543_DE82_EF95)));
    }
    key
}

pub fn substream(seed: u64, purpose: &str, ids: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(substream_seed(seed, purpose, ids))
}

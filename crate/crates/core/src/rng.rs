//! Deterministic random streams.
//!
//! Every consumer of randomness draws from its own ChaCha8 stream keyed by
//! the master seed, a domain tag and up to two indices (typically client and
//! round). Evaluation order therefore never changes results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream domains. The numeric values are part of the reproducibility
/// contract and must not change.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Profile = 1,
    Fading = 2,
    Partition = 3,
    Dataset = 4,
    LocalUpdate = 5,
    Selection = 6,
    Allocation = 7,
    Genetic = 8,
    ModelInit = 9,
    Instance = 10,
}

const fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Mixes the key parts into a single 64-bit stream key.
pub const fn stream_key(seed: u64, domain: Domain, a: u64, b: u64) -> u64 {
    let mut h = splitmix64(seed);
    h = splitmix64(h ^ domain as u64);
    h = splitmix64(h ^ a);
    splitmix64(h ^ b.rotate_left(32))
}

pub fn stream(seed: u64, domain: Domain, a: u64, b: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(stream_key(seed, domain, a, b))
}

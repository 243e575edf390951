//! Deterministic fan-out of a master seed into independent RNG streams.
//!
//! Every stochastic stage of the pipeline derives its own `u64` seed with
//! [`derive_seed`], a SplitMix64 finalizer over the master seed and a stream
//! index. Workers therefore never share RNG state and results do not depend
//! on scheduling order.

use rand_chacha::ChaCha12Rng;

/// Domain tag for encounter generation streams.
pub const DOMAIN_GENERATE: u64 = 0x01;
/// Domain tag for policy evaluation streams.
pub const DOMAIN_EVALUATE: u64 = 0x02;
/// Domain tag for single-decision planning.
pub const DOMAIN_PLAN: u64 = 0x03;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a stream seed from a master seed and an index (counter-based).
pub fn derive_seed(master: u64, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(index.wrapping_add(1)))
}

/// Derives a stream seed from a master seed, a domain tag, and two indices
/// (e.g. policy index and encounter index).
pub fn derive_seed3(master: u64, domain: u64, a: u64, b: u64) -> u64 {
    derive_seed(derive_seed(derive_seed(master, domain), a), b)
}

/// Stable 64-bit FNV-1a hash, used to mix policy labels into seeds.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100_0000_01b3);
    }
    h
}

/// A ChaCha stream seeded from a derived seed.
pub fn rng_from(seed: u64) -> ChaCha12Rng {
    use rand::SeedableRng;
    ChaCha12Rng::seed_from_u64(seed)
}

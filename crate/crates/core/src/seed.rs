//! Deterministic seed derivation and RNG construction.
//!
//! Every source of randomness in the crate is a `ChaCha8Rng` seeded through
//! [`derive_seed`], so parallel tasks can each derive an independent stream
//! from `(base_seed, stream_index)` and results never depend on scheduling.

use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer; decorrelates nearby integer seeds.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive an independent seed for stream `stream` of a base seed.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(base) ^ stream)
}

/// Derive a seed from a base and two stream indices (e.g. iteration, epoch).
pub fn derive_seed2(base: u64, a: u64, b: u64) -> u64 {
    derive_seed(derive_seed(base, a), b)
}

/// Deterministic RNG from a 64-bit seed.
pub fn rng(seed: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(seed)
}

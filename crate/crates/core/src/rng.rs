//! Deterministic seed derivation.
//!
//! Every stochastic stage derives its generator from `(experiment seed,
//! stream tag)` so that results are reproducible bit-for-bit regardless of
//! thread count or evaluation order: parallel loops hand each work item its
//! own child seed up front instead of sharing a generator.
//!
//! ChaCha is used everywhere because its stream is specified independently
//! of the `rand` crate version, unlike `StdRng`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer — a cheap, well-scrambled 64-bit mix.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed for an independent stream.
///
/// `stream` is a caller-chosen tag (purpose constant, row index, member
/// index, …). Distinct tags give statistically independent child streams.
pub fn child_seed(seed: u64, stream: u64) -> u64 {
    splitmix64(seed ^ splitmix64(stream))
}

/// Seeded generator for a `(seed, stream)` pair.
pub fn child_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(child_seed(seed, stream))
}

/// Seeded generator for a bare seed.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

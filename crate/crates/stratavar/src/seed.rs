//! Seed derivation for reproducible parallel work.
//!
//! Every randomised routine in this crate takes a single 64-bit master
//! seed. Independent sub-streams (per trial, per iteration, per worker)
//! are derived by mixing the master seed with a stream index through a
//! fixed splitmix64-style finaliser, so results do not depend on
//! execution order or thread count.

use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;

/// Derives a sub-seed from `seed` and a stream index.
///
/// The mixing function is fixed for all time: changing it would change
/// every seeded result produced by this crate.
#[inline]
pub fn mix(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A deterministic RNG for the given seed.
#[inline]
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// RNG for a derived sub-stream; shorthand for `rng(mix(seed, stream))`.
#[inline]
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    rng(mix(seed, stream))
}

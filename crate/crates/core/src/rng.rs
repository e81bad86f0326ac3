//! Seeded random streams.
//!
//! All stochastic routines draw from ChaCha8 (`rand_chacha::ChaCha8Rng`),
//! a portable 64-bit-seedable counter-based generator. Sub-streams for
//! independent realizations or spins are derived from a root seed with a
//! SplitMix64 mix, so a root seed plus the derivation path fully determines
//! every number drawn. Streams are reproducible across platforms for this
//! crate; other implementations following the same recipe will agree only
//! approximately (normal sampling algorithms differ).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from `seed` along a path of indices.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(seed), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

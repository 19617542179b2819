//! The single PRNG used for every random draw in the crate.
//!
//! xoshiro256** seeded through SplitMix64 (`seed_from_u64`), so a `u64` seed
//! fully determines every stream on every platform.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256StarStar;

pub type Prng = Xoshiro256StarStar;

pub fn seeded(seed: u64) -> Prng {
    Prng::seed_from_u64(seed)
}

/// Derives an independent stream seed from a base seed and a purpose tag.
pub fn derive(seed: u64, tag: u64) -> u64 {
    // One SplitMix64 round over the mixed input.
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

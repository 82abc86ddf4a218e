//! Seed derivation. Every random stream in the crate is a ChaCha8 generator
//! keyed by a base seed mixed with a tuple of integer coordinates, so streams
//! never depend on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes `parts` into `base`.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(base), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn rng_for(base: u64, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, parts))
}

// Purpose tags keep streams for different consumers apart.
pub(crate) const TAG_TEACHER_INIT: u64 = 1;
pub(crate) const TAG_STUDENT_INIT: u64 = 2;
pub(crate) const TAG_TEACHER_SHUFFLE: u64 = 3;
pub(crate) const TAG_STUDENT_SHUFFLE: u64 = 4;
pub(crate) const TAG_PROJECTION_INIT: u64 = 5;
pub(crate) const TAG_CHAIN_SHUFFLE: u64 = 6;
pub(crate) const TAG_STRATIFY: u64 = 7;

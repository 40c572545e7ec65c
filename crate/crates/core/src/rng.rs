//! Seeding conventions.
//!
//! Every stochastic routine takes an explicit `u64` seed and draws from a
//! ChaCha8 stream. Work split into chunks uses child seeds
//! `derive_seed(parent, chunk_index)`, so results do not depend on how many
//! threads process the chunks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StdRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> StdRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer applied to `parent ^ mix(index)`.
pub fn derive_seed(parent: u64, index: u64) -> u64 {
    splitmix64(parent ^ splitmix64(index.wrapping_add(0x9E37_79B9_7F4A_7C15)))
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

//! Seed derivation. Every random stream in the benchmark is a ChaCha8 generator
//! seeded from a base seed mixed with a tag path, so that streams for
//! different clients, rounds and purposes never overlap.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix a base seed with a sequence of tags into a new seed.
pub fn derive(base: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(base), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rng_for(base: u64, tags: &[u64]) -> Rng {
    rng(derive(base, tags))
}

// Purpose tags.
pub const TAG_DROPOUT: u64 = 0xD0;
pub const TAG_SHUFFLE: u64 = 0x5F;
pub const TAG_SELECT: u64 = 0x5E;
pub const TAG_CAP: u64 = 0xCA;
pub const TAG_SMOTE: u64 = 0x53;

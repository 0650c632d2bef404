//! Seed derivation for independent, reproducible random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a base seed with a tag path into a new seed. Results stay below
/// 2^63 so they survive a round trip through TOML integers.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    let mixed = tags
        .iter()
        .fold(splitmix(base), |acc, &t| splitmix(acc ^ splitmix(t.wrapping_add(GOLDEN))));
    mixed >> 1
}

pub fn stream(seed: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed)
}

// Stream tags.
pub(crate) const TAG_DATA: u64 = 1;
pub(crate) const TAG_BATCH: u64 = 2;
pub(crate) const TAG_LINK: u64 = 3;
pub(crate) const TAG_AGENT: u64 = 4;
pub(crate) const TAG_ORACLE: u64 = 5;

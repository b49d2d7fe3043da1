//! Seed streams.
//!
//! Every random draw in the crate comes from a `ChaCha8Rng` seeded with
//! `derive_seed(root, stream, index)`, where `stream` names the consumer
//! (see the `*_STREAM` constants) and `index` separates sub-streams such as
//! per-user draws or epochs. Derivation is a SplitMix64 finalizer chained
//! over the three inputs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub const INIT_STREAM: u64 = 1;
pub const SPLIT_STREAM: u64 = 2;
pub const SAMPLER_STREAM: u64 = 3;
pub const AUC_STREAM: u64 = 4;
pub const CITY_STREAM: u64 = 5;
pub const CITY_USER_STREAM: u64 = 6;
pub const GRADCHECK_STREAM: u64 = 7;

#[inline]
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(root: u64, stream: u64, index: u64) -> u64 {
    mix(mix(mix(root) ^ stream) ^ index)
}

pub fn stream(root: u64, stream: u64, index: u64) -> Rng {
    Rng::seed_from_u64(derive_seed(root, stream, index))
}

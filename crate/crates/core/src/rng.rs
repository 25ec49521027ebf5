//! Seed derivation.
//!
//! Every random stream in the crate is a `ChaCha8Rng` seeded with
//! `seed_from_u64(derive_seed(master, tag, index))`. Deriving one seed per
//! (purpose, record) keeps parallel work reproducible regardless of thread
//! count or scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Recorded in dataset manifests and model checkpoints.
pub const RNG_ALGORITHM: &str = "ChaCha8Rng seeded from SplitMix64(master, tag, index)";

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Purpose tags for derived streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamTag {
    Generate = 1,
    Distribution = 2,
    Label = 3,
    QrRule = 4,
    Shuffle = 5,
    Init = 6,
    Coverage = 7,
}

pub fn derive_seed(master: u64, tag: StreamTag, index: u64) -> u64 {
    let a = splitmix64(master ^ splitmix64(tag as u64));
    splitmix64(a ^ splitmix64(index.wrapping_add(0x5851_f42d_4c95_7f2d)))
}

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn stream(master: u64, tag: StreamTag, index: u64) -> Rng {
    rng_from_seed(derive_seed(master, tag, index))
}

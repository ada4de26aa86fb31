//! Counter-based random streams.
//!
//! Every consumer derives its generator from `(seed, purpose, stream)`, so
//! results never depend on how work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[inline]
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Salts separating the random streams of different experiments.
pub mod purpose {
    pub const SHARED_WORDS: u64 = 0x5348_4152_4544;
    pub const PIXEL_WORDS: u64 = 0x5049_5845_4c;
    pub const ESTIMATOR: u64 = 0x4553_5449_4d;
    pub const LOCI: u64 = 0x4c4f_4349;
    pub const STATS: u64 = 0x5354_4154_53;
    pub const PAIRS: u64 = 0x5041_4952_53;
}

/// Seed for a given purpose; distinct purposes give unrelated streams.
#[inline]
pub fn derive_seed(seed: u64, purpose: u64) -> u64 {
    splitmix64(seed ^ splitmix64(purpose))
}

/// ChaCha8 generator for `(seed, stream)`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

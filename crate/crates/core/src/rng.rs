//! Seeded random streams. Every consumer gets its own ChaCha8 stream so
//! that, for example, noise sweeps reuse identical episode sequences.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const STREAM_INIT: u64 = 1;
pub const STREAM_TRAIN_ENV: u64 = 2;
pub const STREAM_TRAIN_AUX: u64 = 3;
pub const STREAM_VALID_ENV: u64 = 4;
pub const STREAM_EVAL_ENV: u64 = 5;
pub const STREAM_NOISE: u64 = 6;
pub const STREAM_LESION: u64 = 7;
pub const STREAM_PULSE: u64 = 8;
pub const STREAM_STATS: u64 = 9;
pub const STREAM_CALIBRATION: u64 = 10;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derives a child seed, e.g. one per episode or per condition.
pub fn child_seed(seed: u64, salt: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

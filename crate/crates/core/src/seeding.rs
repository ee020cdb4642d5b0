//! Deterministic random substreams.
//!
//! Every consumer of randomness gets its own ChaCha8 stream derived from the
//! master seed and a fixed stream id, so adding draws in one place never shifts
//! the draws of another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const GEOMETRY: u64 = 1;
pub const MD_INIT: u64 = 2;
pub const MD_TRAIN: u64 = 3;
pub const NN_INIT: u64 = 4;
pub const NN_TRAIN: u64 = 5;
pub const SIMULATE: u64 = 6;
/// Calibration and evaluation chunks use stream ids above these bases.
pub const CALIBRATION_BASE: u64 = 1 << 32;
pub const EVALUATION_BASE: u64 = 2 << 32;

pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Seed for a derived sub-experiment (geometry repetition, sweep point, ...).
pub fn derive(seed: u64, salt: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

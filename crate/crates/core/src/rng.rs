//! Deterministic RNG stream derivation.
//!
//! Every stochastic task (a path, a proposal, a categorical draw) owns an
//! independent ChaCha stream derived from the master seed and a tuple of
//! task indices. Results therefore do not depend on execution order or on
//! the number of worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a master seed with task indices into a 64-bit stream key.
pub fn stream_key(seed: u64, indices: &[u64]) -> u64 {
    indices
        .iter()
        .fold(splitmix64(seed), |acc, &i| splitmix64(acc ^ splitmix64(i.wrapping_add(0xA076_1D64_78BD_642F))))
}

/// RNG for the task identified by `(seed, indices...)`.
pub fn stream(seed: u64, indices: &[u64]) -> SimRng {
    ChaCha8Rng::seed_from_u64(stream_key(seed, indices))
}

//! Counter-based stream derivation.
//!
//! Every trajectory draws from its own ChaCha8 stream whose seed is a pure
//! function of `(master, index)`. Results therefore do not depend on which
//! worker simulates which index, or in which order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `seed_i = mix64(mix64(master) + (i + 1) * GOLDEN)`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    mix64(mix64(master).wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN)))
}

/// Generator for one derived seed on a numbered sub-stream.
///
/// Sub-streams of the same seed are independent ChaCha streams; couplings use
/// stream 0 for offspring draws and stream 1 for Bernoulli marks.
pub fn stream(seed: u64, sub: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(sub);
    rng
}

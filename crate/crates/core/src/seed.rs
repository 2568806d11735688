//! Deterministic seed derivation.
//!
//! Every random stream in the crate is a ChaCha8 generator keyed by a 64-bit
//! seed, with independent sub-streams selected through the ChaCha stream id.
//! Replicate `r` of a master seed uses [`derive_seed`], so results never
//! depend on how work is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used throughout.
pub type Rng = ChaCha8Rng;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for replicate `index` of `master`.
#[inline]
pub fn derive_seed(master: u64, index: u64) -> u64 {
    mix64(mix64(master ^ 0x9e37_79b9_7f4a_7c15).wrapping_add(mix64(index.wrapping_add(1))))
}

/// Generator for `seed`.
pub fn rng_from_seed(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Generator for sub-stream `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> Rng {
    let mut rng = Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws per Monte Carlo batch. Each batch owns a sub-stream, so a budget
/// splits into the same batches whatever the worker count.
pub const BATCH_SIZE: usize = 8192;

/// `(stream, draws)` pairs covering `budget` draws in batches of `batch`.
pub fn batch_plan(budget: usize, batch: usize) -> alloc::vec::Vec<(u64, usize)> {
    let batch = batch.max(1);
    (0..budget.div_ceil(batch))
        .map(|b| (b as u64, batch.min(budget - b * batch)))
        .collect()
}

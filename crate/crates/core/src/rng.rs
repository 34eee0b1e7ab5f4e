//! Counter-based seed splitting.
//!
//! Every random quantity in the crate is drawn from a ChaCha stream addressed
//! by `(seed, stream)`. Workers never share a generator, so results do not
//! depend on how instantiations are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from a parent seed and a list of tags.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(mix64(seed), |acc, &t| mix64(acc ^ mix64(t.wrapping_add(0x5851_f42d_4c95_7f2d))))
}

/// Generator for the `stream`-th independent stream under `seed`.
pub fn stream_rng(seed: u64, tags: &[u64]) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, tags));
    rng.set_stream(tags.first().copied().unwrap_or(0));
    rng
}

/// Seed of the `trial`-th Monte Carlo instantiation.
pub fn trial_seed(seed: u64, trial: u64) -> u64 {
    derive_seed(seed, &[0x7472_6961_6c, trial])
}

//! Reproducible random streams.
//!
//! A run has a single root seed. Episode `k` draws from ChaCha8 stream `k`
//! keyed by that seed, so an episode's randomness does not depend on how many
//! draws earlier episodes made or in which order episodes were executed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type EpisodeRng = ChaCha8Rng;

/// Random stream for episode `episode` of the run seeded with `root_seed`.
pub fn episode_rng(root_seed: u64, episode: u64) -> EpisodeRng {
    let mut rng = ChaCha8Rng::seed_from_u64(root_seed);
    rng.set_stream(episode);
    rng
}

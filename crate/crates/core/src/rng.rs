//! Seeded random streams for reproducible Monte Carlo runs.
//!
//! Every trial draws from its own ChaCha8 stream: the key is derived from the
//! base seed and the stream id is the trial index. Results therefore do not
//! depend on how trials are scheduled across worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator for a top-level seed.
pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent generator for trial `trial` under `base_seed`.
pub fn trial_rng(base_seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(trial);
    rng
}

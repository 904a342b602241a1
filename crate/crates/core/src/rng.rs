//! Named random streams derived from one root seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Stream used by the optimizer (minibatch shuffling).
pub const STREAM_UPDATER: u64 = 1;
/// Stream used for network initialization.
pub const STREAM_INIT: u64 = 2;
/// Stream used by evaluation runs.
pub const STREAM_EVAL: u64 = 3;
/// Stream used by symmetry checks.
pub const STREAM_CHECK: u64 = 4;
/// Rollout worker `w` draws from stream `STREAM_WORKER_BASE + w`.
pub const STREAM_WORKER_BASE: u64 = 1 << 32;

/// Evaluation episode `i` draws from stream `STREAM_EPISODE_BASE + i`.
pub const STREAM_EPISODE_BASE: u64 = 1 << 48;

/// Independent generator for `(root, stream)`.
pub fn stream(root: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(root);
    rng.set_stream(stream);
    rng
}

/// Generator for rollout worker `worker`.
pub fn worker_stream(root: u64, worker: usize) -> SimRng {
    stream(root, STREAM_WORKER_BASE + worker as u64)
}

/// Generator for evaluation episode `episode`.
pub fn episode_stream(root: u64, episode: usize) -> SimRng {
    stream(root, STREAM_EPISODE_BASE + episode as u64)
}

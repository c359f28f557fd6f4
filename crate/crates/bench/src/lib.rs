//! Workloads shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use etlp::config::{DatasetKind, RunConfig};
use etlp::Network;

/// Bernoulli spike frames at probability `p`.
pub fn random_frames(steps: usize, channels: usize, p: f64, seed: u64) -> Vec<Vec<bool>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..steps)
        .map(|_| (0..channels).map(|_| rng.random_bool(p)).collect())
        .collect()
}

/// The default network of `dataset`, initialised from seed 1.
pub fn default_network(dataset: DatasetKind) -> Network {
    RunConfig::defaults(dataset)
        .build_network(1)
        .expect("default configs are valid")
}

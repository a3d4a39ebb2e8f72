//! Shared fixtures for the benchmarks.

use nanosort_core::harness::RunConfig;
use nanosort_core::pivot::Key;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn sorted_keys(n: usize, seed: u64) -> Vec<Key> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keys: Vec<Key> = (0..n).map(|_| rng.gen()).collect();
    keys.sort_unstable();
    keys
}

/// A small sort that still exercises two levels.
pub fn small_run(nodes: usize, b: usize, keys_per_node: usize) -> RunConfig {
    RunConfig::shaped(nodes, b, keys_per_node).expect("power of b")
}

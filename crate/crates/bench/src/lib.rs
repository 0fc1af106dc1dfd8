//! Shared fixtures for the criterion benchmarks.

use glntsp_core::dataset::generate_instance;
use glntsp_core::graph::{distance_matrix, DistanceMatrix, TspInstance};
use glntsp_core::seeding::stream_rng;

/// Deterministic uniform instance for a given size and index.
pub fn bench_instance(n: usize, index: u64) -> TspInstance {
    let mut rng = stream_rng(0xbe_ac_44, &[n as u64, index]);
    generate_instance(n, &mut rng).expect("n >= 3")
}

/// Distance matrix of [`bench_instance`].
pub fn bench_matrix(n: usize, index: u64) -> DistanceMatrix {
    distance_matrix(&bench_instance(n, index))
}

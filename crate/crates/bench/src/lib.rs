//! Seeded inputs shared by the benchmarks.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Positive-valued `rows × cols` matrix drawn from a fixed seed.
pub fn positive_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(0.1..5.0))
}

/// Alternating class labels for `n` rows.
pub fn labels(n: usize, n_classes: usize) -> Vec<usize> {
    (0..n).map(|i| i % n_classes).collect()
}

//! Synthetic workloads for the forest benchmarks.

use mrf_core::Dataset;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `n` rows of `d` uniform features in [0, 1); the label is the class whose
/// band contains the sum of the first two features, with `noise` of the
/// labels redrawn uniformly.
pub fn synthetic(n: usize, d: usize, classes: usize, noise: f64, seed: u64) -> Dataset {
    assert!(d >= 2 && classes >= 2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
        let band = ((row[0] + row[1]) / 2.0 * classes as f64) as usize;
        let label = if rng.random::<f64>() < noise {
            rng.random_range(0..classes)
        } else {
            band.min(classes - 1)
        };
        rows.push(row);
        labels.push(label);
    }
    Dataset::new(rows, labels, classes).expect("synthetic data is valid")
}

//! Shared fixtures for the pipeline benchmarks.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use clsc_core::synth::{generate, SynthConfig};
use clsc_core::dataset::Dataset;

/// Random embedding matrix with entries in (-1, 1).
pub fn random_embeddings(b: usize, d: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = Array2::zeros((b, d));
    for v in z.iter_mut() {
        *v = rng.gen_range(-1.0..1.0);
    }
    z
}

/// Candidate mask where each row admits its own type plus a shared one.
pub fn overlapping_mask(b: usize, k: usize) -> Array2<f64> {
    let mut m = Array2::zeros((b, k));
    for i in 0..b {
        m[[i, i % k]] = 1.0;
        m[[i, 0]] = 1.0;
    }
    m
}

/// A benchmark-sized synthetic dataset.
pub fn bench_dataset(n_samples: usize, seed: u64) -> Dataset {
    generate(&SynthConfig {
        n_samples,
        seed,
        ..SynthConfig::default()
    })
    .expect("valid benchmark config")
}

//! Fixtures shared by the kernel benchmarks.

use mimgan_core::nn::mlp_specs;
use mimgan_core::{rng, Activation, DenseMatrix, MlpModel};

/// Standard-normal matrix from a fixed stream.
pub fn gaussian_matrix(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    rng::standard_normal_matrix(&mut rng::stream(seed, 0), rows, cols)
}

/// Discriminator-shaped network: `input → hidden → 1` with a sigmoid head.
pub fn discriminator(input: usize, hidden: &[usize], seed: u64) -> MlpModel {
    MlpModel::new(&mlp_specs(input, hidden, 1, Activation::Sigmoid), &mut rng::stream(seed, 1)).expect("valid specs")
}

/// Scores with a planted signal and labels at roughly 5% prevalence.
pub fn scored_set(n: usize, seed: u64) -> (Vec<f64>, Vec<u8>) {
    let noise = gaussian_matrix(n, 1, seed);
    let labels: Vec<u8> = (0..n).map(|i| u8::from(i % 20 == 0)).collect();
    let scores = noise
        .as_slice()
        .iter()
        .zip(&labels)
        .map(|(z, &l)| z + 2.0 * f64::from(l))
        .collect();
    (scores, labels)
}

//! Shared helpers for integration tests.

use deepfault::{LabeledInput, Matrix, Network};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::path::PathBuf;

/// Network with the given widths and uniform weights in `[-scale, scale]`.
#[allow(dead_code)]
pub fn random_network(rng: &mut ChaCha8Rng, widths: &[usize], scale: f64) -> Network {
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for i in 0..widths.len() - 1 {
        let rows: Vec<Vec<f64>> = (0..widths[i + 1])
            .map(|_| {
                (0..widths[i])
                    .map(|_| (rng.random::<f64>() * 2.0 - 1.0) * scale)
                    .collect()
            })
            .collect();
        weights.push(Matrix::from_rows(rows).unwrap());
        let b: Vec<f64> = (0..widths[i + 1])
            .map(|_| (rng.random::<f64>() * 2.0 - 1.0) * scale)
            .collect();
        biases.push(b);
    }
    Network::new(weights, biases, 0.01).unwrap()
}

#[allow(dead_code)]
pub fn random_input(rng: &mut ChaCha8Rng, len: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..len).map(|_| lo + rng.random::<f64>() * (hi - lo)).collect()
}

#[allow(dead_code)]
pub fn random_labeled(rng: &mut ChaCha8Rng, len: usize, classes: usize) -> LabeledInput {
    let features = random_input(rng, len, 0.0, 1.0);
    let label = rng.random_range(0..classes);
    LabeledInput::new(features, label)
}

/// Bundled dataset directory (override with DEEPFAULT_DATA_DIR).
#[allow(dead_code)]
pub fn data_dir() -> PathBuf {
    if let Ok(dir) = std::env::var("DEEPFAULT_DATA_DIR") {
        return PathBuf::from(dir);
    }
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist")
}

/// Bit-exact equality of two networks.
#[allow(dead_code)]
pub fn networks_bit_equal(a: &Network, b: &Network) -> bool {
    if a.layer_widths() != b.layer_widths() || a.alpha().to_bits() != b.alpha().to_bits() {
        return false;
    }
    for (wa, wb) in a.weights().iter().zip(b.weights()) {
        for (r, row) in (0..wa.rows()).map(|r| (r, wa.row(r))) {
            for (c, v) in row.iter().enumerate() {
                if v.to_bits() != wb.get(r, c).to_bits() {
                    return false;
                }
            }
        }
    }
    for (ba, bb) in a.biases().iter().zip(b.biases()) {
        if ba.len() != bb.len() {
            return false;
        }
        if ba.iter().zip(bb).any(|(x, y)| x.to_bits() != y.to_bits()) {
            return false;
        }
    }
    true
}

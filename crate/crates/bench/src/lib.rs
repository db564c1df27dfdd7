//! Fixtures shared by the benchmarks.

use strokesig_core::ink::synth_dataset;
use strokesig_core::rng::{Domain, Stream};
use strokesig_core::{Character, Tensor};

/// One synthetic character per category.
pub fn characters(n: usize) -> Vec<Character> {
    synth_dataset(n, 1, 1.0, 7).expect("valid synth parameters").items
}

/// Random path of `len` points with unit-scale steps.
pub fn random_path<const D: usize>(len: usize) -> Vec<[f64; D]> {
    let mut rng = Stream::new(7, Domain::Test, &[len as u64, D as u64]);
    let mut p = [0.0; D];
    (0..len)
        .map(|_| {
            for v in &mut p {
                *v += rng.symmetric(1.0);
            }
            p
        })
        .collect()
}

pub fn random_tensor(shape: &[usize]) -> Tensor<f32> {
    let mut rng = Stream::new(7, Domain::Test, shape.iter().map(|&s| s as u64).collect::<Vec<_>>().as_slice());
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.symmetric(1.0) as f32).collect()).expect("shape matches data")
}

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::array::DenseArray;

/// Uniform in ±1/√fan_in, the usual linear-layer initialization.
pub fn linear_weight<R: Rng + ?Sized>(rng: &mut R, fan_in: usize, fan_out: usize) -> DenseArray<f32> {
    let bound = 1.0 / (fan_in.max(1) as f32).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| rng.random_range(-bound..=bound))
        .collect();
    DenseArray::from_vec(&[fan_in, fan_out], data).expect("shape matches data")
}

pub fn normal<R: Rng + ?Sized>(rng: &mut R, shape: &[usize], std: f32) -> DenseArray<f32> {
    let dist = Normal::new(0.0, std).expect("finite std");
    let n = shape.iter().product();
    DenseArray::from_vec(shape, (0..n).map(|_| dist.sample(rng)).collect()).expect("shape matches data")
}

//! Gaussian dequantization of discrete columns and its inverse.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};

use super::TrainError;

/// Standard deviation of the dequantization noise (variance 1/36).
pub const DEQUANT_STD: f64 = 1.0 / 6.0;

/// Replaces every integer `D` by a draw from `Normal(D, 1/36)`.
pub fn dequantize(values: &[f64], seed: u64) -> Result<Vec<f64>, TrainError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    dequantize_with(values, &mut rng)
}

pub fn dequantize_with<R: Rng + ?Sized>(values: &[f64], rng: &mut R) -> Result<Vec<f64>, TrainError> {
    if let Some(&bad) = values.iter().find(|v| !v.is_finite() || v.fract() != 0.0) {
        return Err(TrainError::NonIntegerInput(bad));
    }
    let noise = Normal::new(0.0, DEQUANT_STD).expect("valid std");
    Ok(values.iter().map(|&v| v + noise.sample(rng)).collect())
}

/// Rounds half away from zero, then clamps into `[0, cardinality - 1]`.
pub fn quantize(values: &[f64], cardinality: usize) -> Result<Vec<usize>, TrainError> {
    values.iter().map(|&v| quantize_one(v, cardinality)).collect()
}

pub fn quantize_one(value: f64, cardinality: usize) -> Result<usize, TrainError> {
    if !value.is_finite() {
        return Err(TrainError::NonFiniteInput);
    }
    if cardinality == 0 {
        return Err(TrainError::InvalidConfig("cardinality must be at least 1".into()));
    }
    Ok(value.round().clamp(0.0, (cardinality - 1) as f64) as usize)
}

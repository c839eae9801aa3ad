//! Weight initialization helpers.

use rand::Rng;

use crate::Scalar;

/// Kaiming-uniform fan-in samples: `U(-b, b)` with `b = sqrt(6 / fan_in)`.
pub fn kaiming_uniform<S: Scalar, R: Rng>(rng: &mut R, fan_in: usize, n: usize) -> Vec<S> {
    let bound = (6.0 / fan_in as f64).sqrt();
    (0..n)
        .map(|_| S::from_f64_lossy(rng.gen_range(-bound..bound)))
        .collect()
}

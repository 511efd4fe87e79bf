use rand::Rng;

use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Uniform draw in `±sqrt(6 / fan_in)`.
pub fn fan_in_uniform<T: Scalar, R: Rng + ?Sized>(shape: impl Into<Vec<usize>>, fan_in: usize, rng: &mut R) -> Tensor<T> {
    let bound = (6.0 / fan_in.max(1) as f64).sqrt();
    Tensor::from_fn(shape, |_| T::from_f64_lossy(rng.random_range(-bound..bound)))
}

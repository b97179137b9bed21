use super::Tensor;
use crate::scalar::Scalar;
use rand::Rng;

/// Xavier-uniform matrix: entries in `±sqrt(6 / (rows + cols))`.
pub fn xavier_uniform<T: Scalar>(rows: usize, cols: usize, rng: &mut impl Rng) -> Tensor<T> {
    let bound = (6.0 / (rows + cols).max(1) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| T::from_f64_lossy(rng.gen_range(-bound..=bound)))
        .collect();
    Tensor::matrix(rows, cols, data).expect("shape computed")
}

/// Uniform entries in `[-bound, bound]`.
pub fn uniform<T: Scalar>(rows: usize, cols: usize, bound: f64, rng: &mut impl Rng) -> Tensor<T> {
    let data = (0..rows * cols)
        .map(|_| T::from_f64_lossy(rng.gen_range(-bound..=bound)))
        .collect();
    Tensor::matrix(rows, cols, data).expect("shape computed")
}

//! Parameter initialisation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tensor::Tensor;

/// Half-width of the Glorot/Xavier uniform range.
pub fn glorot_bound(rows: usize, cols: usize) -> f64 {
    (6.0 / (rows + cols) as f64).sqrt()
}

/// Glorot uniform draws from a caller-owned generator, row-major.
pub fn glorot_uniform<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    assert!(rows >= 1 && cols >= 1, "glorot_uniform needs a non-empty shape");
    let bound = glorot_bound(rows, cols);
    let data = (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect();
    Tensor::from_vec(rows, cols, data).expect("length matches shape")
}

/// Glorot uniform tensor from a fresh ChaCha8 stream seeded with `seed`.
pub fn glorot_init(rows: usize, cols: usize, seed: u64) -> Tensor {
    glorot_uniform(rows, cols, &mut ChaCha8Rng::seed_from_u64(seed))
}

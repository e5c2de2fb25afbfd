//! Seeded random sources. Every stochastic path in the crate goes through here.

use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{Matrix, Tensor3};

pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_vec(rng: &mut SeededRng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn gaussian_matrix(rng: &mut SeededRng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn gaussian_tensor(rng: &mut SeededRng, dims: (usize, usize, usize)) -> Tensor3 {
    Tensor3::from_fn(dims, |_, _, _| rng.sample(StandardNormal))
}

pub fn uniform_matrix(rng: &mut SeededRng, rows: usize, cols: usize, half_width: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-half_width..=half_width))
}

/// Independent stream `stream` of the generator seeded with `seed`.
pub fn seeded_stream(seed: u64, stream: u64) -> SeededRng {
    let mut r = seeded(seed);
    r.set_stream(stream);
    r
}

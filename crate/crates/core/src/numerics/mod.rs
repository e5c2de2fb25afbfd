//! Dense kernels, norms, spectral estimation, seeded randomness and the gradient tape.

mod gradcheck;
mod kernels;
mod matrix;
pub mod rng;
mod spectral;
mod tape;
mod tensor;

pub use gradcheck::{compare_with_central_differences, finite_difference_check, RELATIVE_ERROR_FLOOR};
pub use kernels::{center_norm_backward, center_norm_forward, Activation};
pub use matrix::Matrix;
pub use spectral::{frobenius_norm, power_iteration, power_iteration_seeded, POWER_ITERATION_SEED};
pub use tape::{GradientTape, Gradients, Value, Var};
pub use tensor::Tensor3;

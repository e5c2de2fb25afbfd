//! Forward and adjoint kernels shared by the plain evaluation path and the tape.

use super::{Matrix, Tensor3};
use crate::error::{shape_err, Result};

/// Pointwise nonlinearity used inside residual branches and backbones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => libm::tanh(x),
        }
    }

    /// Derivative expressed through the pre-activation input.
    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = libm::tanh(x);
                1.0 - t * t
            }
        }
    }

    pub fn lipschitz(self) -> f64 {
        1.0
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "relu" => Some(Activation::Relu),
            "tanh" => Some(Activation::Tanh),
            _ => None,
        }
    }
}

fn check_affine(x: &Tensor3, gamma: &Matrix, beta: &Matrix) -> Result<()> {
    let (_, n, d) = x.dims();
    if gamma.shape() != (n, d) {
        return Err(shape_err("center_norm gamma", (n, d), gamma.shape()));
    }
    if beta.shape() != (n, d) {
        return Err(shape_err("center_norm beta", (n, d), beta.shape()));
    }
    Ok(())
}

/// `out[:, n, d] = gamma[n, d] · alpha · (x[:, n, d] − mean_t x[:, n, d]) + beta[n, d]`.
pub fn center_norm_forward(
    x: &Tensor3,
    gamma: &Matrix,
    beta: &Matrix,
    alpha: f64,
) -> Result<Tensor3> {
    check_affine(x, gamma, beta)?;
    let mean = x.temporal_mean();
    let mut out = x.clone();
    let w = gamma.as_slice().len();
    for frame in out.as_mut_slice().chunks_exact_mut(w.max(1)) {
        for (((v, &m), &g), &b) in frame
            .iter_mut()
            .zip(mean.as_slice())
            .zip(gamma.as_slice())
            .zip(beta.as_slice())
        {
            *v = g * alpha * (*v - m) + b;
        }
    }
    Ok(out)
}

/// Adjoints of [`center_norm_forward`] with respect to `(x, gamma, beta)`.
pub fn center_norm_backward(
    x: &Tensor3,
    gamma: &Matrix,
    alpha: f64,
    grad_out: &Tensor3,
) -> (Tensor3, Matrix, Matrix) {
    let (_, n, d) = x.dims();
    let mean_x = x.temporal_mean();
    let mean_g = grad_out.temporal_mean();
    let w = n * d;
    let mut dx = grad_out.clone();
    let mut dgamma = Matrix::zeros(n, d);
    let mut dbeta = Matrix::zeros(n, d);
    for (frame_dx, frame_x) in dx
        .as_mut_slice()
        .chunks_exact_mut(w.max(1))
        .zip(x.as_slice().chunks_exact(w.max(1)))
    {
        for k in 0..w {
            let go = frame_dx[k];
            dgamma.as_mut_slice()[k] += go * alpha * (frame_x[k] - mean_x.as_slice()[k]);
            dbeta.as_mut_slice()[k] += go;
            frame_dx[k] = gamma.as_slice()[k] * alpha * (go - mean_g.as_slice()[k]);
        }
    }
    (dx, dgamma, dbeta)
}

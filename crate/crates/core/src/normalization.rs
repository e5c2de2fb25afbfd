//! Center Normalization and the Instance Normalization Jacobian diagnostic.

use crate::error::{invalid, shape_err, Result};
use crate::numerics::{center_norm_forward, power_iteration, Matrix, Tensor3};

/// Scale `alpha` plus per-(node, feature) affine fields `gamma`, `beta`.
#[derive(Debug, Clone, PartialEq)]
pub struct CenterNormParams {
    alpha: f64,
    pub gamma: Matrix,
    pub beta: Matrix,
}

impl CenterNormParams {
    /// `gamma = 1`, `beta = 0` for `n_nodes × n_features` series.
    pub fn identity(alpha: f64, n_nodes: usize, n_features: usize) -> Result<Self> {
        Self::new(
            alpha,
            Matrix::filled(n_nodes, n_features, 1.0),
            Matrix::zeros(n_nodes, n_features),
        )
    }

    pub fn new(alpha: f64, gamma: Matrix, beta: Matrix) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(invalid("center-norm alpha must be positive and finite"));
        }
        if gamma.shape() != beta.shape() {
            return Err(shape_err("center-norm params", gamma.shape(), beta.shape()));
        }
        gamma.validate_finite("gamma")?;
        beta.validate_finite("beta")?;
        if gamma.max_abs() > 1.0 {
            return Err(invalid("center-norm gamma entries must lie in [-1, 1]"));
        }
        Ok(Self { alpha, gamma, beta })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Projects every `gamma` entry back into `[-1, 1]`.
    pub fn clamp_gamma(&mut self) {
        self.gamma
            .as_mut_slice()
            .iter_mut()
            .for_each(|g| *g = g.clamp(-1.0, 1.0));
    }

    pub fn max_abs_gamma(&self) -> f64 {
        self.gamma.max_abs()
    }
}

/// Mean removal over the time axis of each (node, feature) series, then the
/// affine map `gamma · alpha · (·) + beta`.
pub fn center_norm(x: &Tensor3, p: &CenterNormParams) -> Result<Tensor3> {
    if x.len_time() == 0 {
        return Err(invalid("center_norm needs at least one time step"));
    }
    center_norm_forward(x, &p.gamma, &p.beta, p.alpha)
}

/// `alpha · max|gamma|`, an upper bound on the Lipschitz constant of [`center_norm`].
///
/// The centering matrix `I − (1/T)𝟙𝟙ᵀ` is an orthogonal projection, and each
/// series is scaled by its own `alpha · gamma`, so the block-diagonal map has
/// norm at most the largest such scale. `beta` is an offset and does not count.
pub fn center_norm_lipschitz(p: &CenterNormParams) -> f64 {
    p.alpha * p.max_abs_gamma()
}

/// Spectral norm of `|gamma| · J`, where `J` is the Jacobian of instance
/// normalization `z = y / Std(y)`, `y = (I − (1/T)𝟙𝟙ᵀ)x`:
///
/// `J = (1/Std(y)) · (I − (1/T)𝟙𝟙ᵀ) · (I − yyᵀ/‖y‖²)`.
///
/// `Std` is the population standard deviation. Returns `+∞` when the series is
/// exactly constant.
pub fn instance_norm_jacobian_norm(x: &[f64], gamma: f64) -> Result<f64> {
    let t = x.len();
    if t < 2 {
        return Err(invalid("instance_norm_jacobian_norm needs T >= 2"));
    }
    if x.iter().any(|v| !v.is_finite()) || !gamma.is_finite() {
        return Err(crate::Error::NonFinite("instance-norm diagnostic input"));
    }
    let mean = x.iter().sum::<f64>() / t as f64;
    let y: alloc::vec::Vec<f64> = x.iter().map(|v| v - mean).collect();
    let sq: f64 = y.iter().map(|v| v * v).sum();
    let std = libm::sqrt(sq / t as f64);
    if std == 0.0 {
        return Ok(f64::INFINITY);
    }
    let tf = t as f64;
    let center = Matrix::from_fn(t, t, |i, j| if i == j { 1.0 } else { 0.0 } - 1.0 / tf);
    let reject = Matrix::from_fn(t, t, |i, j| if i == j { 1.0 } else { 0.0 } - y[i] * y[j] / sq);
    let mut jac = center.matmul(&reject)?;
    jac.scale_in_place(gamma.abs() / std);
    power_iteration(&jac, 10_000, 1e-14)
}

use alloc::vec::Vec;

use super::tape::{GradientTape, Var};
use super::Tensor3;
use crate::error::{invalid, Error, Result};

/// Denominator floor for coordinates whose true derivative is ~0.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

/// Max relative error between tape adjoints of `f` at `x` and central differences.
///
/// `f` records a scalar-valued computation on the tape, starting from the leaf
/// it is handed.
pub fn finite_difference_check<F>(f: F, x: &Tensor3, eps: f64) -> Result<f64>
where
    F: Fn(&mut GradientTape, Var) -> Result<Var>,
{
    let mut tape = GradientTape::new();
    let leaf = tape.tensor_leaf(x.clone());
    let out = f(&mut tape, leaf)?;
    let grads = tape.backward(out)?;
    let analytic: Vec<f64> = match grads.tensor(leaf) {
        Some(g) => g.as_slice().to_vec(),
        None => alloc::vec![0.0; x.len()],
    };

    let dims = x.dims();
    compare_with_central_differences(
        &analytic,
        x.as_slice(),
        |p| {
            let mut tape = GradientTape::new();
            let leaf = tape.tensor_leaf(Tensor3::new(dims, p.to_vec())?);
            let out = f(&mut tape, leaf)?;
            tape.scalar(out)
        },
        eps,
    )
}

/// Compares a precomputed gradient against central differences of `eval` at `point`.
pub fn compare_with_central_differences<E>(
    analytic: &[f64],
    point: &[f64],
    mut eval: E,
    eps: f64,
) -> Result<f64>
where
    E: FnMut(&[f64]) -> Result<f64>,
{
    if !(1e-7..=1e-4).contains(&eps) {
        return Err(invalid("finite-difference eps must lie in [1e-7, 1e-4]"));
    }
    if analytic.len() != point.len() {
        return Err(invalid("gradient and point lengths differ"));
    }
    let mut p = point.to_vec();
    let mut worst = 0.0_f64;
    for i in 0..p.len() {
        let orig = p[i];
        p[i] = orig + eps;
        let up = eval(&p)?;
        p[i] = orig - eps;
        let down = eval(&p)?;
        p[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::Evaluation("non-finite output under perturbation".into()));
        }
        let numeric = (up - down) / (2.0 * eps);
        let a = analytic[i];
        let denom = a.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR);
        worst = worst.max((a - numeric).abs() / denom);
    }
    Ok(worst)
}

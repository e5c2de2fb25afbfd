use super::{rng, Matrix};
use crate::error::{invalid, Error, Result};

/// Seed of the start vector used by [`power_iteration`].
pub const POWER_ITERATION_SEED: u64 = 0x05ee_d0f5_u64;

pub fn frobenius_norm(m: &Matrix) -> f64 {
    libm::sqrt(m.as_slice().iter().map(|v| v * v).sum())
}

/// Largest singular value of `m`, estimated by power iteration on `mᵀm`.
///
/// Stops once the relative change of the estimate drops below `tol` or after
/// `max_iters` multiplications. The start vector is a unit Gaussian drawn from
/// [`POWER_ITERATION_SEED`].
pub fn power_iteration(m: &Matrix, max_iters: usize, tol: f64) -> Result<f64> {
    power_iteration_seeded(m, max_iters, tol, POWER_ITERATION_SEED)
}

pub fn power_iteration_seeded(m: &Matrix, max_iters: usize, tol: f64, seed: u64) -> Result<f64> {
    if max_iters == 0 {
        return Err(invalid("power_iteration needs max_iters >= 1"));
    }
    if !(tol > 0.0) {
        return Err(invalid("power_iteration needs tol > 0"));
    }
    m.validate_finite("power_iteration input")?;
    if m.as_slice().iter().all(|&v| v == 0.0) || m.rows() == 0 || m.cols() == 0 {
        return Ok(0.0);
    }

    let mut v = rng::gaussian_vec(&mut rng::seeded(seed), m.cols());
    if normalize(&mut v) == 0.0 {
        return Err(Error::Evaluation("degenerate start vector".into()));
    }
    let mut sigma = 0.0;
    for _ in 0..max_iters {
        let mv = m.matvec(&v);
        // Rayleigh quotient of mᵀm at unit v.
        let next = libm::sqrt(mv.iter().map(|x| x * x).sum());
        let mut w = m.tmatvec(&mv);
        if normalize(&mut w) == 0.0 {
            // v fell into the null space of mᵀm
            return Ok(next);
        }
        v = w;
        let done = (next - sigma).abs() <= tol * next;
        sigma = next;
        if done {
            break;
        }
    }
    // One last quotient with the final direction.
    let mv = m.matvec(&v);
    Ok(libm::sqrt(mv.iter().map(|x| x * x).sum()).max(sigma))
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = libm::sqrt(v.iter().map(|x| x * x).sum());
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_diagonal() {
        let s = power_iteration(&Matrix::identity(4), 100, 1e-12).unwrap();
        assert!((s - 1.0).abs() < 1e-12);
        let s = power_iteration(&Matrix::diag(&[3.0, 1.0]), 1000, 1e-14).unwrap();
        assert!((s - 3.0).abs() < 1e-10);
    }

    #[test]
    fn zero_matrix_short_circuits() {
        assert_eq!(power_iteration(&Matrix::zeros(3, 3), 1, 1e-6).unwrap(), 0.0);
    }

    #[test]
    fn rejects_bad_arguments() {
        let mut m = Matrix::identity(2);
        assert!(power_iteration(&m, 0, 1e-6).is_err());
        assert!(power_iteration(&m, 10, 0.0).is_err());
        m.as_mut_slice()[1] = f64::INFINITY;
        assert_eq!(
            power_iteration(&m, 10, 1e-6),
            Err(Error::NonFinite("power_iteration input"))
        );
    }

    #[test]
    fn frobenius_closed_forms() {
        assert_eq!(frobenius_norm(&Matrix::zeros(3, 3)), 0.0);
        assert!((frobenius_norm(&Matrix::identity(5)) - libm::sqrt(5.0)).abs() < 1e-15);
        let m = Matrix::from_rows(&[&[3.0, 4.0], &[0.0, 0.0]]).unwrap();
        assert_eq!(frobenius_norm(&m), 5.0);
    }

    #[test]
    fn rectangular_rank_one() {
        // u vᵀ has spectral norm |u||v|.
        let m = Matrix::from_fn(3, 5, |r, c| (r as f64 + 1.0) * (c as f64 - 2.0));
        let want = libm::sqrt(14.0) * libm::sqrt(10.0);
        let s = power_iteration(&m, 100, 1e-14).unwrap();
        assert!((s - want).abs() < 1e-10 * want);
        assert!(s <= frobenius_norm(&m) + 1e-12);
    }
}

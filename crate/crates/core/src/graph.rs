//! Spatial graphs and the self-looped symmetric normalization `Â = D̃^{-1/2}(A + I)D̃^{-1/2}`.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::numerics::{power_iteration, Matrix};

/// Tolerance used when checking that an input matrix is symmetric.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Weighted undirected graph with its normalized adjacency precomputed.
///
/// Both matrices sit behind `Arc` so blocks and tapes can share them freely.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialGraph {
    adjacency: Arc<Matrix>,
    normalized: Arc<Matrix>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphCertificate {
    pub spectral_norm: f64,
    pub symmetric: bool,
    pub connected_components: usize,
}

impl SpatialGraph {
    /// Wraps a symmetric, nonnegative adjacency matrix. Its diagonal is ignored
    /// (set to zero) because the normalization adds unit self-loops itself.
    pub fn from_adjacency(adjacency: Matrix) -> Result<Self> {
        validate_adjacency(&adjacency)?;
        let mut a = adjacency;
        for i in 0..a.rows() {
            a[(i, i)] = 0.0;
        }
        let normalized = normalize_adjacency(&a)?;
        Ok(Self {
            adjacency: Arc::new(a),
            normalized: Arc::new(normalized),
        })
    }

    /// `N` isolated nodes; `Â` is the identity.
    pub fn isolated(n: usize) -> Self {
        Self {
            adjacency: Arc::new(Matrix::zeros(n, n)),
            normalized: Arc::new(Matrix::identity(n)),
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.adjacency.rows()
    }

    pub fn adjacency(&self) -> &Matrix {
        &self.adjacency
    }

    pub fn normalized(&self) -> &Matrix {
        &self.normalized
    }

    pub fn normalized_shared(&self) -> Arc<Matrix> {
        Arc::clone(&self.normalized)
    }

    /// Undirected edges `(i, j)` with `i < j` and positive weight.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let n = self.n_nodes();
        let mut out = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if self.adjacency[(i, j)] > 0.0 {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn certify(&self) -> Result<GraphCertificate> {
        certify_graph(self)
    }
}

fn validate_adjacency(a: &Matrix) -> Result<()> {
    if !a.is_square() {
        return Err(invalid("adjacency must be square"));
    }
    a.validate_finite("adjacency")?;
    if a.as_slice().iter().any(|&v| v < 0.0) {
        return Err(invalid("adjacency must be nonnegative"));
    }
    if !a.is_symmetric(SYMMETRY_TOL) {
        return Err(invalid("adjacency must be symmetric"));
    }
    Ok(())
}

/// Gaussian-kernel graph from a precomputed distance matrix.
///
/// `A[i][j] = exp(-d(i,j)² / bandwidth²)` when that weight is at least
/// `threshold` and `i != j`; every other entry is zero.
pub fn build_gaussian_kernel_graph(
    distances: &Matrix,
    bandwidth: f64,
    threshold: f64,
) -> Result<SpatialGraph> {
    if !distances.is_square() {
        return Err(invalid("distance matrix must be square"));
    }
    distances.validate_finite("distances")?;
    if distances.as_slice().iter().any(|&v| v < 0.0) {
        return Err(invalid("distances must be nonnegative"));
    }
    if !distances.is_symmetric(SYMMETRY_TOL) {
        return Err(invalid("distance matrix must be symmetric"));
    }
    if (0..distances.rows()).any(|i| distances[(i, i)] != 0.0) {
        return Err(invalid("distance matrix must have a zero diagonal"));
    }
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(invalid("bandwidth must be positive"));
    }
    if !(0.0..1.0).contains(&threshold) {
        return Err(invalid("threshold must lie in [0, 1)"));
    }

    let n = distances.rows();
    let a = Matrix::from_fn(n, n, |i, j| {
        if i == j {
            return 0.0;
        }
        let d = distances[(i, j)];
        let w = libm::exp(-(d * d) / (bandwidth * bandwidth));
        if w >= threshold {
            w
        } else {
            0.0
        }
    });
    SpatialGraph::from_adjacency(a)
}

/// `D̃^{-1/2}(A + I)D̃^{-1/2}` with `D̃` the degree matrix of `A + I`.
pub fn normalize_adjacency(a: &Matrix) -> Result<Matrix> {
    validate_adjacency(a)?;
    let n = a.rows();
    let mut tilde = a.clone();
    for i in 0..n {
        tilde[(i, i)] += 1.0;
    }
    let inv_sqrt_deg: Vec<f64> = (0..n)
        .map(|i| 1.0 / libm::sqrt(tilde.row(i).iter().sum::<f64>()))
        .collect();
    let mut out = Matrix::from_fn(n, n, |i, j| inv_sqrt_deg[i] * tilde[(i, j)] * inv_sqrt_deg[j]);
    // Exact symmetry regardless of summation order.
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (out[(i, j)] + out[(j, i)]);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    Ok(out)
}

pub fn certify_graph(g: &SpatialGraph) -> Result<GraphCertificate> {
    let spectral_norm = power_iteration(g.normalized(), 100_000, 1e-13)?;
    Ok(GraphCertificate {
        spectral_norm,
        symmetric: g.normalized().is_symmetric(SYMMETRY_TOL),
        connected_components: connected_components(g.adjacency()),
    })
}

/// Number of connected components of the positive-weight pattern of `a`.
pub fn connected_components(a: &Matrix) -> usize {
    let n = a.rows();
    let mut seen = vec![false; n];
    let mut stack = Vec::new();
    let mut count = 0;
    for start in 0..n {
        if seen[start] {
            continue;
        }
        count += 1;
        seen[start] = true;
        stack.push(start);
        while let Some(i) = stack.pop() {
            for j in 0..n {
                if !seen[j] && (a[(i, j)] > 0.0 || a[(j, i)] > 0.0) {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    count
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_node() {
        let g = build_gaussian_kernel_graph(&Matrix::zeros(1, 1), 1.0, 0.1).unwrap();
        assert_eq!(g.adjacency().as_slice(), &[0.0]);
        assert_eq!(g.normalized().as_slice(), &[1.0]);
    }

    #[test]
    fn two_coincident_nodes() {
        let g = build_gaussian_kernel_graph(&Matrix::zeros(2, 2), 1.0, 0.0).unwrap();
        assert_eq!(g.adjacency().as_slice(), &[0.0, 1.0, 1.0, 0.0]);
        for &v in g.normalized().as_slice() {
            assert!((v - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn isolated_nodes_normalize_to_identity() {
        assert_eq!(normalize_adjacency(&Matrix::zeros(3, 3)).unwrap(), Matrix::identity(3));
    }

    #[test]
    fn complete_triangle() {
        let a = Matrix::from_fn(3, 3, |i, j| if i == j { 0.0 } else { 1.0 });
        let hat = normalize_adjacency(&a).unwrap();
        for &v in hat.as_slice() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let c = certify_graph(&SpatialGraph::from_adjacency(a).unwrap()).unwrap();
        assert!((c.spectral_norm - 1.0).abs() < 1e-9);
        assert!(c.symmetric);
        assert_eq!(c.connected_components, 1);
    }

    #[test]
    fn no_edges_means_n_components() {
        let c = certify_graph(&SpatialGraph::isolated(4)).unwrap();
        assert_eq!(c.connected_components, 4);
    }

    #[test]
    fn rejects_bad_distances() {
        let asym = Matrix::from_rows(&[&[0.0, 1.0], &[2.0, 0.0]]).unwrap();
        assert!(build_gaussian_kernel_graph(&asym, 1.0, 0.1).is_err());
        let neg = Matrix::from_rows(&[&[0.0, -1.0], &[-1.0, 0.0]]).unwrap();
        assert!(build_gaussian_kernel_graph(&neg, 1.0, 0.1).is_err());
        let ok = Matrix::from_rows(&[&[0.0, 1.0], &[1.0, 0.0]]).unwrap();
        assert!(build_gaussian_kernel_graph(&ok, 0.0, 0.1).is_err());
        assert!(build_gaussian_kernel_graph(&ok, 1.0, 1.0).is_err());
    }
}

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

use super::Matrix;
use crate::error::{shape_err, Error, Result};

/// Dense `[T × N × D]` array: time steps, graph nodes, features.
///
/// Storage is time-major, so the `N × D` frame of each time step is contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    dims: (usize, usize, usize),
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn new(dims: (usize, usize, usize), data: Vec<f64>) -> Result<Self> {
        if dims.0 * dims.1 * dims.2 != data.len() {
            return Err(shape_err("Tensor3::new", dims.0 * dims.1 * dims.2, data.len()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("tensor entries"));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: (usize, usize, usize)) -> Self {
        Self {
            dims,
            data: vec![0.0; dims.0 * dims.1 * dims.2],
        }
    }

    pub fn filled(dims: (usize, usize, usize), value: f64) -> Self {
        Self {
            dims,
            data: vec![value; dims.0 * dims.1 * dims.2],
        }
    }

    pub fn from_fn(
        dims: (usize, usize, usize),
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(dims.0 * dims.1 * dims.2);
        for t in 0..dims.0 {
            for n in 0..dims.1 {
                for d in 0..dims.2 {
                    data.push(f(t, n, d));
                }
            }
        }
        Self { dims, data }
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    #[inline]
    pub fn len_time(&self) -> usize {
        self.dims.0
    }

    #[inline]
    pub fn n_nodes(&self) -> usize {
        self.dims.1
    }

    #[inline]
    pub fn n_features(&self) -> usize {
        self.dims.2
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// The `N × D` slice at time step `t`.
    pub fn frame(&self, t: usize) -> &[f64] {
        let w = self.dims.1 * self.dims.2;
        &self.data[t * w..(t + 1) * w]
    }

    /// Copies time steps `[start, end)` into a new tensor.
    pub fn time_slice(&self, start: usize, end: usize) -> Self {
        let w = self.dims.1 * self.dims.2;
        Self {
            dims: (end - start, self.dims.1, self.dims.2),
            data: self.data[start * w..end * w].to_vec(),
        }
    }

    /// The length-`T` series at one (node, feature) location.
    pub fn series(&self, n: usize, d: usize) -> Vec<f64> {
        (0..self.dims.0).map(|t| self[(t, n, d)]).collect()
    }

    pub fn validate_finite(&self, what: &'static str) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite(what))
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            dims: self.dims,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Tensor3, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert_eq!(self.dims, other.dims);
        Self {
            dims: self.dims,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn add(&self, other: &Tensor3) -> Self {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor3) -> Self {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn add_assign(&mut self, other: &Tensor3) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn l2_norm(&self) -> f64 {
        libm::sqrt(self.data.iter().map(|v| v * v).sum())
    }

    pub fn max_abs_diff(&self, other: &Tensor3) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn mean_abs_diff(&self, other: &Tensor3) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        let s: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .sum();
        s / self.data.len() as f64
    }

    /// Temporal mean per (node, feature), shaped `N × D`.
    pub fn temporal_mean(&self) -> Matrix {
        let (t_len, n, d) = self.dims;
        let mut m = Matrix::zeros(n, d);
        if t_len == 0 {
            return m;
        }
        for t in 0..t_len {
            for (acc, v) in m.as_mut_slice().iter_mut().zip(self.frame(t)) {
                *acc += v;
            }
        }
        m.scale_in_place(1.0 / t_len as f64);
        m
    }

    /// `out[t] = adj · self[t]` for every time step (spatial mixing).
    pub fn graph_mix(&self, adj: &Matrix) -> Result<Self> {
        let (t_len, n, d) = self.dims;
        if adj.shape() != (n, n) {
            return Err(shape_err("graph_mix", (n, n), adj.shape()));
        }
        let mut out = Self::zeros(self.dims);
        for t in 0..t_len {
            let src = self.frame(t);
            let dst = &mut out.data[t * n * d..(t + 1) * n * d];
            for i in 0..n {
                let dst_row = &mut dst[i * d..(i + 1) * d];
                for (j, &a) in adj.row(i).iter().enumerate() {
                    if a == 0.0 {
                        continue;
                    }
                    for (o, &x) in dst_row.iter_mut().zip(&src[j * d..(j + 1) * d]) {
                        *o += a * x;
                    }
                }
            }
        }
        Ok(out)
    }

    /// `out[t, n, :] = self[t, n, :] · w` (feature mixing), `w` is `D_in × D_out`.
    pub fn feature_matmul(&self, w: &Matrix) -> Result<Self> {
        let (t_len, n, d) = self.dims;
        if w.rows() != d {
            return Err(shape_err("feature_matmul", d, w.rows()));
        }
        let d_out = w.cols();
        let mut out = Self::zeros((t_len, n, d_out));
        for (src, dst) in self
            .data
            .chunks_exact(d.max(1))
            .zip(out.data.chunks_exact_mut(d_out.max(1)))
        {
            for (k, &x) in src.iter().enumerate() {
                if x == 0.0 {
                    continue;
                }
                for (o, &wv) in dst.iter_mut().zip(w.row(k)) {
                    *o += x * wv;
                }
            }
        }
        Ok(out)
    }

    /// `Σ_{t,n} self[t,n,:]ᵀ · other[t,n,:]`, the weight adjoint of [`feature_matmul`](Self::feature_matmul).
    pub fn feature_outer_sum(&self, other: &Tensor3) -> Matrix {
        let d_in = self.dims.2;
        let d_out = other.dims.2;
        let mut g = Matrix::zeros(d_in, d_out);
        for (a, b) in self
            .data
            .chunks_exact(d_in.max(1))
            .zip(other.data.chunks_exact(d_out.max(1)))
        {
            for (k, &x) in a.iter().enumerate() {
                if x == 0.0 {
                    continue;
                }
                let row = &mut g.as_mut_slice()[k * d_out..(k + 1) * d_out];
                for (o, &y) in row.iter_mut().zip(b) {
                    *o += x * y;
                }
            }
        }
        g
    }

    /// `out[h] = Σ_l m[h, l] · self[l]` (temporal mixing); `m` is `H × T`.
    pub fn time_matmul(&self, m: &Matrix) -> Result<Self> {
        let (t_len, n, d) = self.dims;
        if m.cols() != t_len {
            return Err(shape_err("time_matmul", t_len, m.cols()));
        }
        let w = n * d;
        let mut out = Self::zeros((m.rows(), n, d));
        for h in 0..m.rows() {
            let dst = &mut out.data[h * w..(h + 1) * w];
            for (l, &coef) in m.row(h).iter().enumerate() {
                if coef == 0.0 {
                    continue;
                }
                for (o, &x) in dst.iter_mut().zip(self.frame(l)) {
                    *o += coef * x;
                }
            }
        }
        Ok(out)
    }

    /// `Σ_{n,d} self[h,n,d] · other[l,n,d]`, the matrix adjoint of [`time_matmul`](Self::time_matmul).
    pub fn time_outer_sum(&self, other: &Tensor3) -> Matrix {
        Matrix::from_fn(self.dims.0, other.dims.0, |h, l| {
            self.frame(h)
                .iter()
                .zip(other.frame(l))
                .map(|(a, b)| a * b)
                .sum()
        })
    }

    /// Adds `bias[t]` to every entry of frame `t`.
    pub fn add_time_bias(&self, bias: &[f64]) -> Result<Self> {
        if bias.len() != self.dims.0 {
            return Err(shape_err("add_time_bias", self.dims.0, bias.len()));
        }
        let w = self.dims.1 * self.dims.2;
        let mut out = self.clone();
        for (t, &b) in bias.iter().enumerate() {
            out.data[t * w..(t + 1) * w].iter_mut().for_each(|v| *v += b);
        }
        Ok(out)
    }

    /// Per-frame sums, the adjoint of [`add_time_bias`](Self::add_time_bias).
    pub fn frame_sums(&self) -> Vec<f64> {
        (0..self.dims.0).map(|t| self.frame(t).iter().sum()).collect()
    }
}

impl Index<(usize, usize, usize)> for Tensor3 {
    type Output = f64;

    #[inline]
    fn index(&self, (t, n, d): (usize, usize, usize)) -> &f64 {
        &self.data[(t * self.dims.1 + n) * self.dims.2 + d]
    }
}

impl IndexMut<(usize, usize, usize)> for Tensor3 {
    #[inline]
    fn index_mut(&mut self, (t, n, d): (usize, usize, usize)) -> &mut f64 {
        &mut self.data[(t * self.dims.1 + n) * self.dims.2 + d]
    }
}

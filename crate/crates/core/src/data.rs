//! Synthetic shifted series, chronological splits, train-only scaling and windowing.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, shape_err, Result};
use crate::graph::{build_gaussian_kernel_graph, SpatialGraph};
use crate::numerics::{rng, Matrix, Tensor3};
use rand::Rng;

/// Fractions of the series assigned to train and train+validation.
pub const TRAIN_FRACTION: f64 = 0.7;
pub const VAL_FRACTION: f64 = 0.1;

const BURN_IN: usize = 100;

/// Injected non-stationarity for [`generate_synthetic`].
///
/// Empty `node_offsets` / `node_scales` mean all-zero offsets and unit scales.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftSpec {
    /// Added to every series as `temporal_drift · t`.
    pub temporal_drift: f64,
    pub regime_jump: f64,
    /// First index carrying `regime_jump`; `None` disables the jump.
    pub jump_index: Option<usize>,
    pub node_offsets: Vec<f64>,
    pub node_scales: Vec<f64>,
    pub noise_std: f64,
    pub seasonal_amplitude: f64,
    pub seasonal_period: f64,
    /// `ρ` in `X_{t+1} = ρ · Â X_t + …`.
    pub ar_coefficient: f64,
}

impl Default for ShiftSpec {
    fn default() -> Self {
        Self {
            temporal_drift: 0.0,
            regime_jump: 0.0,
            jump_index: None,
            node_offsets: Vec::new(),
            node_scales: Vec::new(),
            noise_std: 1.0,
            seasonal_amplitude: 0.0,
            seasonal_period: 48.0,
            ar_coefficient: 0.7,
        }
    }
}

impl ShiftSpec {
    fn validate(&self, n_nodes: usize, t_total: usize) -> Result<()> {
        let scalars = [
            self.temporal_drift,
            self.regime_jump,
            self.noise_std,
            self.seasonal_amplitude,
            self.seasonal_period,
            self.ar_coefficient,
        ];
        if scalars.iter().any(|v| !v.is_finite()) {
            return Err(crate::Error::NonFinite("shift spec"));
        }
        if self.noise_std < 0.0 {
            return Err(invalid("noise_std must be nonnegative"));
        }
        if self.seasonal_period <= 0.0 {
            return Err(invalid("seasonal_period must be positive"));
        }
        if !(self.ar_coefficient.abs() < 1.0) {
            return Err(invalid("ar_coefficient must lie in (-1, 1)"));
        }
        for (name, v) in [("node_offsets", &self.node_offsets), ("node_scales", &self.node_scales)] {
            if !v.is_empty() && v.len() != n_nodes {
                return Err(shape_err(name, n_nodes, v.len()));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(crate::Error::NonFinite("shift spec node fields"));
            }
        }
        if self.node_scales.iter().any(|&s| s <= 0.0) {
            return Err(invalid("node_scales must be positive"));
        }
        if self.jump_index.is_some_and(|j| j >= t_total) {
            return Err(invalid("jump_index must fall inside the series"));
        }
        Ok(())
    }

    fn offset(&self, n: usize) -> f64 {
        self.node_offsets.get(n).copied().unwrap_or(0.0)
    }

    fn scale(&self, n: usize) -> f64 {
        self.node_scales.get(n).copied().unwrap_or(1.0)
    }
}

/// Per-feature standardization `(x − mean) / std`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureScaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureScaler {
    /// Mean and population std of each feature over all times and nodes of `x`.
    /// A feature with zero spread gets `std = 1`.
    pub fn fit(x: &Tensor3) -> Result<Self> {
        if x.is_empty() {
            return Err(invalid("cannot fit a scaler on an empty tensor"));
        }
        let (t, n, d) = x.dims();
        let count = (t * n) as f64;
        let mut mean = vec![0.0; d];
        for (i, v) in x.as_slice().iter().enumerate() {
            mean[i % d] += v;
        }
        mean.iter_mut().for_each(|m| *m /= count);
        let mut var = vec![0.0; d];
        for (i, v) in x.as_slice().iter().enumerate() {
            let c = v - mean[i % d];
            var[i % d] += c * c;
        }
        let std = var
            .iter()
            .map(|v| {
                let s = libm::sqrt(v / count);
                if s > 0.0 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn identity(n_features: usize) -> Self {
        Self {
            mean: vec![0.0; n_features],
            std: vec![1.0; n_features],
        }
    }

    pub fn n_features(&self) -> usize {
        self.mean.len()
    }

    pub fn transform(&self, x: &Tensor3) -> Result<Tensor3> {
        self.apply(x, |v, m, s| (v - m) / s)
    }

    pub fn inverse_transform(&self, x: &Tensor3) -> Result<Tensor3> {
        self.apply(x, |v, m, s| v * s + m)
    }

    fn apply(&self, x: &Tensor3, f: impl Fn(f64, f64, f64) -> f64) -> Result<Tensor3> {
        let d = self.n_features();
        if x.n_features() != d {
            return Err(shape_err("scaler features", d, x.n_features()));
        }
        let data = x
            .as_slice()
            .iter()
            .enumerate()
            .map(|(i, &v)| f(v, self.mean[i % d], self.std[i % d]))
            .collect();
        Tensor3::new(x.dims(), data)
    }
}

/// Chronological split: train is `[0, train_end)`, validation `[train_end, val_end)`,
/// test `[val_end, T)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitBounds {
    pub train_end: usize,
    pub val_end: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesDataset {
    raw: Tensor3,
    graph: SpatialGraph,
    scaler: FeatureScaler,
    split: SplitBounds,
}

impl SeriesDataset {
    /// 70/10/20 chronological split with the scaler fit on the train part.
    pub fn new(raw: Tensor3, graph: SpatialGraph) -> Result<Self> {
        let t = raw.len_time();
        let train_end = (t as f64 * TRAIN_FRACTION) as usize;
        let val_end = (t as f64 * (TRAIN_FRACTION + VAL_FRACTION)) as usize;
        Self::with_split(raw, graph, SplitBounds { train_end, val_end })
    }

    pub fn with_split(raw: Tensor3, graph: SpatialGraph, split: SplitBounds) -> Result<Self> {
        raw.validate_finite("dataset values")?;
        if raw.n_nodes() != graph.n_nodes() {
            return Err(shape_err("dataset nodes vs graph", graph.n_nodes(), raw.n_nodes()));
        }
        if raw.n_features() == 0 {
            return Err(invalid("dataset needs at least one feature"));
        }
        let t = raw.len_time();
        if !(0 < split.train_end && split.train_end < split.val_end && split.val_end < t) {
            return Err(invalid("split bounds must satisfy 0 < train_end < val_end < T"));
        }
        let scaler = FeatureScaler::fit(&raw.time_slice(0, split.train_end))?;
        Ok(Self {
            raw,
            graph,
            scaler,
            split,
        })
    }

    pub fn raw(&self) -> &Tensor3 {
        &self.raw
    }

    pub fn graph(&self) -> &SpatialGraph {
        &self.graph
    }

    pub fn scaler(&self) -> &FeatureScaler {
        &self.scaler
    }

    pub fn split_bounds(&self) -> SplitBounds {
        self.split
    }

    pub fn range(&self, split: Split) -> (usize, usize) {
        match split {
            Split::Train => (0, self.split.train_end),
            Split::Val => (self.split.train_end, self.split.val_end),
            Split::Test => (self.split.val_end, self.raw.len_time()),
        }
    }

    /// Raw (unscaled) values of one split.
    pub fn split_raw(&self, split: Split) -> Tensor3 {
        let (a, b) = self.range(split);
        self.raw.time_slice(a, b)
    }
}

/// One input/target pair; `start` is the absolute index of the first input step.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub start: usize,
    pub x: Tensor3,
    pub y: Tensor3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowedSplits {
    pub lookback: usize,
    pub horizon: usize,
    pub train: Vec<Window>,
    pub val: Vec<Window>,
    pub test: Vec<Window>,
}

impl WindowedSplits {
    pub fn get(&self, split: Split) -> &[Window] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

/// Stride-1 windows inside each split, on scaled values.
///
/// Every window's input and target indices lie within one split, so a split
/// of length `s` yields `s − L − H + 1` windows.
pub fn make_windows(ds: &SeriesDataset, lookback: usize, horizon: usize) -> Result<WindowedSplits> {
    if lookback == 0 || horizon == 0 {
        return Err(invalid("lookback and horizon must be positive"));
    }
    let scaled = ds.scaler.transform(&ds.raw)?;
    let mut out = [Vec::new(), Vec::new(), Vec::new()];
    for (slot, split) in out.iter_mut().zip([Split::Train, Split::Val, Split::Test]) {
        let (a, b) = ds.range(split);
        if lookback + horizon > b - a {
            return Err(invalid(alloc::format!(
                "lookback + horizon = {} exceeds the {:?} split length {}",
                lookback + horizon,
                split,
                b - a
            )));
        }
        for s in a..=b - lookback - horizon {
            slot.push(Window {
                start: s,
                x: scaled.time_slice(s, s + lookback),
                y: scaled.time_slice(s + lookback, s + lookback + horizon),
            });
        }
    }
    let [train, val, test] = out;
    Ok(WindowedSplits {
        lookback,
        horizon,
        train,
        val,
        test,
    })
}

/// Random node coordinates in the unit square, Euclidean distances.
pub fn random_coordinates_distances(n_nodes: usize, r: &mut rng::SeededRng) -> Matrix {
    let pts: Vec<(f64, f64)> = (0..n_nodes).map(|_| (r.random::<f64>(), r.random::<f64>())).collect();
    Matrix::from_fn(n_nodes, n_nodes, |i, j| {
        if i == j {
            0.0
        } else {
            libm::hypot(pts[i].0 - pts[j].0, pts[i].1 - pts[j].1)
        }
    })
}

/// Distances plus the kernel parameters that turn them into a graph.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphRecipe {
    pub distances: Matrix,
    pub bandwidth: f64,
    pub threshold: f64,
}

impl GraphRecipe {
    pub fn build(&self) -> Result<SpatialGraph> {
        build_gaussian_kernel_graph(&self.distances, self.bandwidth, self.threshold)
    }
}

/// Kernel parameters on `distances` keeping roughly the `density` fraction of
/// node pairs with the largest weights. The bandwidth is the median distance.
pub fn recipe_with_density(distances: Matrix, density: f64) -> Result<GraphRecipe> {
    if !(density > 0.0 && density <= 1.0) {
        return Err(invalid("graph_density must lie in (0, 1]"));
    }
    let n = distances.rows();
    let mut pair_d: Vec<f64> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .map(|(i, j)| distances[(i, j)])
        .collect();
    if pair_d.is_empty() {
        return Ok(GraphRecipe {
            distances,
            bandwidth: 1.0,
            threshold: 0.0,
        });
    }
    pair_d.sort_by(f64::total_cmp);
    let median = pair_d[pair_d.len() / 2];
    let bandwidth = if median > 0.0 { median } else { 1.0 };
    let keep = libm::ceil(density * pair_d.len() as f64) as usize;
    let cutoff = pair_d[keep.clamp(1, pair_d.len()) - 1];
    let threshold = libm::exp(-(cutoff * cutoff) / (bandwidth * bandwidth)).min(1.0 - 1e-12);
    Ok(GraphRecipe {
        distances,
        bandwidth,
        threshold,
    })
}

/// Random-coordinate graph used by [`generate_synthetic`] for the same
/// `(n_nodes, density, seed)`.
pub fn synthetic_graph_recipe(n_nodes: usize, density: f64, seed: u64) -> Result<GraphRecipe> {
    let mut r = rng::seeded_stream(seed, 1);
    recipe_with_density(random_coordinates_distances(n_nodes, &mut r), density)
}

/// Graph-diffused AR series with injected shift.
///
/// The base process is `X_{t+1} = ρ · Â X_t + A·sin(2π t / P + φ_n) + ε`, run
/// independently per feature after a burn-in. The output is
/// `offset_n + scale_n · X + drift · t + jump · 𝟙[t ≥ jump_index]`.
pub fn generate_synthetic(
    n_nodes: usize,
    t_total: usize,
    n_features: usize,
    spec: &ShiftSpec,
    graph_density: f64,
    seed: u64,
) -> Result<SeriesDataset> {
    if n_nodes < 2 {
        return Err(invalid("synthetic data needs at least 2 nodes"));
    }
    if t_total < 200 {
        return Err(invalid("synthetic data needs at least 200 time steps"));
    }
    if n_features == 0 {
        return Err(invalid("synthetic data needs at least one feature"));
    }
    spec.validate(n_nodes, t_total)?;

    let graph = synthetic_graph_recipe(n_nodes, graph_density, seed)?.build()?;
    let mut r = rng::seeded_stream(seed, 2);
    let phases: Vec<f64> = (0..n_nodes)
        .map(|_| r.random::<f64>() * 2.0 * core::f64::consts::PI)
        .collect();

    let width = n_nodes * n_features;
    let mut state = Tensor3::zeros((1, n_nodes, n_features));
    let mut data = Vec::with_capacity(t_total * width);
    for step in 0..BURN_IN + t_total {
        let noise = rng::gaussian_vec(&mut r, width);
        let mixed = state.graph_mix(graph.normalized())?;
        let t = step as f64;
        let next: Vec<f64> = mixed
            .as_slice()
            .iter()
            .zip(&noise)
            .enumerate()
            .map(|(i, (&m, &e))| {
                let n = i / n_features;
                let season = spec.seasonal_amplitude
                    * libm::sin(2.0 * core::f64::consts::PI * t / spec.seasonal_period + phases[n]);
                spec.ar_coefficient * m + season + spec.noise_std * e
            })
            .collect();
        state = Tensor3::new((1, n_nodes, n_features), next)?;
        if step >= BURN_IN {
            data.extend_from_slice(state.as_slice());
        }
    }

    let raw = Tensor3::from_fn((t_total, n_nodes, n_features), |t, n, d| {
        let base = data[t * width + n * n_features + d];
        let jump = match spec.jump_index {
            Some(j) if t >= j => spec.regime_jump,
            _ => 0.0,
        };
        spec.offset(n) + spec.scale(n) * base + spec.temporal_drift * t as f64 + jump
    });
    let degenerate = (0..n_nodes)
        .flat_map(|n| (0..n_features).map(move |d| (n, d)))
        .all(|(n, d)| {
            let s = raw.series(n, d);
            s.iter().all(|&v| v == s[0])
        });
    if degenerate {
        return Err(invalid("shift spec produces zero variance in every series"));
    }
    SeriesDataset::new(raw, graph)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_ds(t: usize) -> SeriesDataset {
        let raw = Tensor3::from_fn((t, 2, 1), |t, n, _| (t * 2 + n) as f64);
        SeriesDataset::new(raw, SpatialGraph::isolated(2)).unwrap()
    }

    #[test]
    fn split_bounds_are_70_10_20() {
        let ds = small_ds(100);
        assert_eq!(ds.split_bounds(), SplitBounds { train_end: 70, val_end: 80 });
    }

    #[test]
    fn window_counts_and_first_window() {
        let raw = Tensor3::from_fn((60, 2, 1), |t, n, _| (t * 2 + n) as f64);
        let split = SplitBounds { train_end: 20, val_end: 40 };
        let ds = SeriesDataset::with_split(raw, SpatialGraph::isolated(2), split).unwrap();
        let w = make_windows(&ds, 12, 3).unwrap();
        assert_eq!(w.train.len(), 6);
        assert_eq!(w.val.len(), 6);
        assert_eq!(w.test.len(), 6);
        let first = ds.scaler().inverse_transform(&w.train[0].x).unwrap();
        for (a, b) in first.as_slice().iter().zip(ds.raw().time_slice(0, 12).as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(make_windows(&ds, 18, 3).is_err());
        assert!(make_windows(&ds, 0, 3).is_err());
    }

    #[test]
    fn scaler_round_trip_and_constant_feature() {
        let x = Tensor3::from_fn((5, 2, 2), |t, n, d| if d == 0 { (t + n) as f64 } else { 3.0 });
        let s = FeatureScaler::fit(&x).unwrap();
        assert_eq!(s.std[1], 1.0);
        let back = s.inverse_transform(&s.transform(&x).unwrap()).unwrap();
        assert!(back.max_abs_diff(&x) < 1e-12);
    }

    #[test]
    fn generator_rejects_bad_input() {
        let spec = ShiftSpec::default();
        assert!(generate_synthetic(1, 300, 1, &spec, 0.3, 1).is_err());
        assert!(generate_synthetic(4, 100, 1, &spec, 0.3, 1).is_err());
        let flat = ShiftSpec {
            noise_std: 0.0,
            ..ShiftSpec::default()
        };
        assert!(generate_synthetic(4, 300, 1, &flat, 0.3, 1).is_err());
        let neg = ShiftSpec {
            node_scales: vec![1.0, -1.0, 1.0, 1.0],
            ..ShiftSpec::default()
        };
        assert!(generate_synthetic(4, 300, 1, &neg, 0.3, 1).is_err());
    }

    #[test]
    fn generator_is_seeded() {
        let spec = ShiftSpec::default();
        let a = generate_synthetic(5, 250, 2, &spec, 0.5, 7).unwrap();
        let b = generate_synthetic(5, 250, 2, &spec, 0.5, 7).unwrap();
        let c = generate_synthetic(5, 250, 2, &spec, 0.5, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.raw(), c.raw());
    }
}

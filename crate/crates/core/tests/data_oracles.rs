use rrn_core::data::{FeatureScaler, Split};
use rrn_core::{generate_synthetic, make_windows, SeriesDataset, ShiftSpec, Tensor3};

/// Node-averaged value at each time step of `x`.
fn cross_node_mean(x: &Tensor3) -> Vec<f64> {
    (0..x.len_time())
        .map(|t| x.frame(t).iter().sum::<f64>() / x.frame(t).len() as f64)
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Standard error of the mean from non-overlapping batch means.
fn batch_mean_se(v: &[f64], batch: usize) -> f64 {
    let means: Vec<f64> = v.chunks_exact(batch).map(mean).collect();
    let m = mean(&means);
    let var = means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (means.len() - 1) as f64;
    (var / means.len() as f64).sqrt()
}

fn zero_shift() -> ShiftSpec {
    ShiftSpec {
        seasonal_amplitude: 0.0,
        ..ShiftSpec::default()
    }
}

#[test]
fn unshifted_series_keeps_its_mean() {
    let ds = generate_synthetic(10, 3000, 1, &zero_shift(), 0.3, 4).unwrap();
    let train = cross_node_mean(&ds.split_raw(Split::Train));
    let test = cross_node_mean(&ds.split_raw(Split::Test));
    let se = (batch_mean_se(&train, 50).powi(2) + batch_mean_se(&test, 50).powi(2)).sqrt();
    assert!((mean(&test) - mean(&train)).abs() < 3.0 * se);
}

#[test]
fn injected_drift_shows_up_in_split_means() {
    let spec = ShiftSpec {
        temporal_drift: 0.01,
        ..zero_shift()
    };
    let ds = generate_synthetic(10, 2000, 1, &spec, 0.3, 5).unwrap();
    let (a, b) = ds.range(Split::Train);
    let (c, d) = ds.range(Split::Test);
    let gap = (c + d - 1) as f64 / 2.0 - (a + b - 1) as f64 / 2.0;
    let diff = mean(&cross_node_mean(&ds.split_raw(Split::Test))) - mean(&cross_node_mean(&ds.split_raw(Split::Train)));
    assert!((diff - 0.01 * gap).abs() < 0.05 * 0.01 * gap, "diff {diff}, expected {}", 0.01 * gap);
}

#[test]
fn drift_is_recovered_by_least_squares() {
    let drift = 0.01;
    let ds = generate_synthetic(20, 2000, 1, &ShiftSpec { temporal_drift: drift, ..zero_shift() }, 0.3, 6).unwrap();
    let (c, d) = ds.range(Split::Test);
    let spec = ShiftSpec {
        temporal_drift: drift,
        noise_std: 0.1 * drift * (d - c) as f64,
        ..zero_shift()
    };
    let ds = generate_synthetic(20, 2000, 1, &spec, 0.3, 6).unwrap();
    let y = cross_node_mean(&ds.split_raw(Split::Test));
    let t: Vec<f64> = (0..y.len()).map(|i| i as f64).collect();
    let (mt, my) = (mean(&t), mean(&y));
    let slope = t.iter().zip(&y).map(|(a, b)| (a - mt) * (b - my)).sum::<f64>()
        / t.iter().map(|a| (a - mt).powi(2)).sum::<f64>();
    assert!((slope - drift).abs() < 0.1 * drift, "slope {slope}");
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    for (rank, &i) in idx.iter().enumerate() {
        r[i] = rank as f64;
    }
    r
}

fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let d2: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - y).powi(2)).sum();
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}

#[test]
fn node_means_follow_offsets() {
    let n = 12;
    let offsets: Vec<f64> = (0..n).map(|i| -5.0 + 10.0 * i as f64 / (n - 1) as f64).collect();
    let spec = ShiftSpec {
        node_offsets: offsets.clone(),
        ..zero_shift()
    };
    let ds = generate_synthetic(n, 2000, 1, &spec, 0.3, 7).unwrap();
    let means = ds.raw().temporal_mean();
    let node_means: Vec<f64> = (0..n).map(|i| means[(i, 0)]).collect();
    assert_eq!(spearman(&node_means, &offsets), 1.0);
}

#[test]
fn scaler_and_windows_use_only_their_split() {
    let ds = generate_synthetic(6, 1000, 2, &ShiftSpec { temporal_drift: 0.01, ..zero_shift() }, 0.4, 8).unwrap();
    let bounds = ds.split_bounds();
    assert_eq!(ds.scaler(), &FeatureScaler::fit(&ds.raw().time_slice(0, bounds.train_end)).unwrap());

    // rewriting everything after the train split leaves the scaler untouched
    let mut poisoned = ds.raw().clone();
    let width = 6 * 2;
    poisoned.as_mut_slice()[bounds.train_end * width..].iter_mut().for_each(|v| *v = 1e6);
    let ds2 = SeriesDataset::new(poisoned, ds.graph().clone()).unwrap();
    assert_eq!(ds2.scaler(), ds.scaler());

    let (l, h) = (12, 6);
    let w = make_windows(&ds, l, h).unwrap();
    let scaled = ds.scaler().transform(ds.raw()).unwrap();
    for (split, windows) in [(Split::Train, &w.train), (Split::Val, &w.val), (Split::Test, &w.test)] {
        let (a, b) = ds.range(split);
        assert_eq!(windows.len(), b - a - l - h + 1);
        for win in windows.iter() {
            assert!(win.start >= a && win.start + l + h <= b);
            assert_eq!(win.x, scaled.time_slice(win.start, win.start + l));
            assert_eq!(win.y, scaled.time_slice(win.start + l, win.start + l + h));
        }
    }
    assert!(w.test.iter().all(|win| win.start >= bounds.val_end));
    assert!(make_windows(&ds, 500, 500).is_err());
}

#[test]
fn generation_is_bitwise_reproducible() {
    let spec = ShiftSpec {
        temporal_drift: 0.003,
        regime_jump: 2.0,
        jump_index: Some(900),
        ..ShiftSpec::default()
    };
    let a = generate_synthetic(8, 1000, 2, &spec, 0.3, 42).unwrap();
    let b = generate_synthetic(8, 1000, 2, &spec, 0.3, 42).unwrap();
    let bits = |d: &SeriesDataset| d.raw().as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
    assert_eq!(a.graph(), b.graph());
    let c = generate_synthetic(8, 1000, 2, &spec, 0.3, 43).unwrap();
    assert_ne!(bits(&a), bits(&c));
}

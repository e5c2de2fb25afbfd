use rrn::config::ExperimentConfig;
use rrn::experiments::{density_report, dispersion_of_means, load_dataset};
use rrn_core::numerics::Matrix;
use rrn_core::{make_windows, BlockConfig, BlockWeights, InversionConfig, RrnTransform};

fn setup() -> (ExperimentConfig, rrn_core::SeriesDataset) {
    let mut cfg = ExperimentConfig::default();
    cfg.data.n_nodes = 6;
    cfg.data.t_total = 600;
    let ds = load_dataset(&cfg, 0).unwrap();
    (cfg, ds)
}

#[test]
fn identity_transform_gives_identical_histograms() {
    let (cfg, ds) = setup();
    let w = make_windows(&ds, 12, 12).unwrap();
    let mut t = RrnTransform::init(ds.graph(), 1, 2, &BlockConfig::default(), InversionConfig::default(), 0).unwrap();
    for b in t.blocks_mut() {
        if let BlockWeights::Hidden { input, output } = &mut b.weights {
            *input = Matrix::zeros(input.rows(), input.cols());
            *output = Matrix::zeros(output.rows(), output.cols());
        }
    }
    let rep = density_report(&t, &w.test, cfg.density.bins).unwrap();
    let (orig, trans): (Vec<_>, Vec<_>) = rep.rows.iter().partition(|r| r.space == "original");
    assert_eq!(orig.len(), 6 * 50);
    for (a, b) in orig.iter().zip(&trans) {
        assert_eq!((a.node, a.bin_left, a.bin_right, a.density), (b.node, b.bin_left, b.bin_right, b.density));
    }
    assert_eq!(rep.original_dispersion, rep.transformed_dispersion);
}

#[test]
fn histograms_integrate_to_one_and_dispersion_recomputes() {
    let (_, ds) = setup();
    let w = make_windows(&ds, 12, 12).unwrap();
    let t = RrnTransform::init(ds.graph(), 1, 2, &BlockConfig::default(), InversionConfig::default(), 0).unwrap();
    let rep = density_report(&t, &w.test, 20).unwrap();
    for node in 0..6 {
        for space in ["original", "transformed"] {
            let mass: f64 = rep
                .rows
                .iter()
                .filter(|r| r.node == node && r.space == space)
                .map(|r| r.density * (r.bin_right - r.bin_left))
                .sum();
            assert!((mass - 1.0).abs() < 1e-9);
        }
    }
    // node means straight from the windows
    let mut sums = [0.0; 6];
    let mut count = 0.0;
    for win in &w.test {
        for t in 0..win.x.len_time() {
            for (i, v) in win.x.frame(t).iter().enumerate() {
                sums[i] += v;
            }
            count += 1.0;
        }
    }
    let means: Vec<f64> = sums.iter().map(|s| s / count).collect();
    let mu = means.iter().sum::<f64>() / 6.0;
    let want = (means.iter().map(|m| (m - mu).powi(2)).sum::<f64>() / 6.0).sqrt();
    assert!((rep.original_dispersion - want).abs() < 1e-12);
    assert!((dispersion_of_means(&[vec![1.0, 3.0], vec![5.0]]) - 1.5).abs() < 1e-15);
}

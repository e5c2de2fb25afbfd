use nalgebra::DMatrix;
use rand::Rng;
use rrn_core::data::synthetic_graph_recipe;
use rrn_core::graph::certify_graph;
use rrn_core::numerics::{power_iteration, rng, Matrix};

fn svd_max(m: &Matrix) -> f64 {
    let d = DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice());
    d.singular_values().iter().copied().fold(0.0, f64::max)
}

#[test]
fn power_iteration_matches_svd_on_random_matrices() {
    let mut r = rng::seeded(2024);
    for k in 0..50 {
        let rows = r.random_range(1..=20);
        let cols = r.random_range(1..=20);
        let m = rng::gaussian_matrix(&mut r, rows, cols);
        let want = svd_max(&m);
        let got = power_iteration(&m, 200_000, 1e-15).unwrap();
        assert!((got - want).abs() <= 1e-8, "matrix {k} ({rows}x{cols}): {got} vs {want}");
    }
}

#[test]
fn normalized_adjacency_has_unit_norm() {
    for seed in 0..20u64 {
        let density = 0.1 + 0.04 * seed as f64;
        let n = 5 + (seed as usize * 7) % 26;
        let g = synthetic_graph_recipe(n, density, seed).unwrap().build().unwrap();
        let cert = certify_graph(&g).unwrap();
        assert!((cert.spectral_norm - 1.0).abs() <= 1e-6, "seed {seed}: {}", cert.spectral_norm);
        assert!((svd_max(g.normalized()) - 1.0).abs() <= 1e-9);
        assert!(cert.symmetric);
    }
}

use rand::Rng;
use rrn_core::normalization::instance_norm_jacobian_norm;
use rrn_core::numerics::rng::{self, SeededRng};
use rrn_core::{
    block_lipschitz_bound, center_norm, center_norm_lipschitz, Activation, BlockConfig, CenterNormParams,
    ResidualBlock, SpatialGraph, Tensor3,
};
use rrn_core::data::synthetic_graph_recipe;

const DIMS: (usize, usize, usize) = (8, 10, 3);

fn pair(r: &mut SeededRng, k: usize) -> (Tensor3, Tensor3) {
    let x = rng::gaussian_tensor(r, DIMS).map(|v| 2.0 * v);
    // alternate far pairs with tiny perturbations, where tanh is steepest near zero
    let scale = if k.is_multiple_of(2) { 1.0 } else { 1e-4 };
    let y = x.add(&rng::gaussian_tensor(r, DIMS).map(|v| scale * v));
    (x, y)
}

fn ratio(fx: &Tensor3, fy: &Tensor3, x: &Tensor3, y: &Tensor3) -> f64 {
    fx.sub(fy).l2_norm() / x.sub(y).l2_norm()
}

fn graph() -> SpatialGraph {
    synthetic_graph_recipe(DIMS.1, 0.3, 9).unwrap().build().unwrap()
}

#[test]
fn center_norm_ratios_stay_below_certificate() {
    let mut r = rng::seeded(1);
    let mut worst = 0.0_f64;
    for k in 0..1000 {
        let alpha = 0.1 + 1.9 * r.random::<f64>();
        let p = CenterNormParams::new(
            alpha,
            rng::uniform_matrix(&mut r, DIMS.1, DIMS.2, 1.0),
            rng::gaussian_matrix(&mut r, DIMS.1, DIMS.2),
        )
        .unwrap();
        let (x, y) = pair(&mut r, k);
        let q = ratio(&center_norm(&x, &p).unwrap(), &center_norm(&y, &p).unwrap(), &x, &y);
        let bound = center_norm_lipschitz(&p);
        assert!(q <= bound * (1.0 + 1e-9), "pair {k}: ratio {q} above {bound}");
        worst = worst.max(q / bound);
    }
    // the certificate should not be loose by orders of magnitude either
    assert!(worst > 0.5, "worst ratio / bound = {worst}");
}

fn random_block(r: &mut SeededRng, g: &SpatialGraph, k: usize) -> ResidualBlock {
    let activation = if k.is_multiple_of(3) { Activation::Relu } else { Activation::Tanh };
    let cfg = BlockConfig {
        alpha: 0.5 + r.random::<f64>(),
        contraction_target: 0.3 + 1.5 * r.random::<f64>(),
        activation,
        hidden: if k % 4 == 1 { None } else { Some(6) },
    };
    let mut b = ResidualBlock::init(g, DIMS.2, &cfg, r).unwrap();
    b.cn.gamma = rng::uniform_matrix(r, DIMS.1, DIMS.2, 1.0);
    b.cn.beta = rng::gaussian_matrix(r, DIMS.1, DIMS.2).scaled(0.1);
    if k.is_multiple_of(2) {
        b.set_rank_one_weights(r);
    } else {
        b.saturate_weights();
    }
    b
}

#[test]
fn block_ratios_stay_below_certificate() {
    let g = graph();
    let mut r = rng::seeded(2);
    let mut block = random_block(&mut r, &g, 0);
    for k in 0..1000 {
        if k % 50 == 0 {
            block = random_block(&mut r, &g, k / 50);
        }
        let (x, y) = pair(&mut r, k);
        let q = ratio(&block.residual(&x).unwrap(), &block.residual(&y).unwrap(), &x, &y);
        let bound = block_lipschitz_bound(&block);
        assert!(q <= bound * (1.0 + 1e-9), "pair {k}: ratio {q} above {bound}");
    }
}

#[test]
fn instance_norm_jacobian_grows_as_variance_shrinks() {
    let mut r = rng::seeded(3);
    let mut base = rng::gaussian_vec(&mut r, 12);
    let m = base.iter().sum::<f64>() / 12.0;
    base.iter_mut().for_each(|v| *v -= m);
    let sd = (base.iter().map(|v| v * v).sum::<f64>() / 12.0).sqrt();
    base.iter_mut().for_each(|v| *v /= sd);
    // series with population variance eps (plus a level that must not matter)
    let norms: Vec<f64> = [1e-1, 1e-3, 1e-5]
        .iter()
        .map(|&eps: &f64| {
            let x: Vec<f64> = base.iter().map(|v| 3.0 + eps.sqrt() * v).collect();
            instance_norm_jacobian_norm(&x, 1.0).unwrap()
        })
        .collect();
    for w in norms.windows(2) {
        assert!(w[1] >= 10.0 * w[0] * (1.0 - 1e-6), "{norms:?}");
    }
}

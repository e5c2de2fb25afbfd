//! Stacks of invertible blocks: `T_φ = H⁽ᴸ⁾ ∘ … ∘ H⁽¹⁾` and its inverse.

use alloc::vec::Vec;

use crate::block::{
    block_forward, block_inverse, block_lipschitz_bound, BlockConfig, BlockVars, InversionConfig,
    ResidualBlock,
};
use crate::error::{invalid, shape_err, Error, Result};
use crate::graph::SpatialGraph;
use crate::numerics::{rng, GradientTape, Tensor3, Var};

/// Default iteration grid of the round-trip diagnostic.
pub const DEFAULT_ITERATION_GRID: [usize; 4] = [5, 10, 20, 50];

#[derive(Debug, Clone, PartialEq)]
pub struct RrnTransform {
    blocks: Vec<ResidualBlock>,
    graph: SpatialGraph,
    pub inversion: InversionConfig,
}

impl RrnTransform {
    pub fn init(
        graph: &SpatialGraph,
        n_features: usize,
        n_blocks: usize,
        block_cfg: &BlockConfig,
        inversion: InversionConfig,
        seed: u64,
    ) -> Result<Self> {
        if n_blocks == 0 {
            return Err(invalid("a transform needs at least one block"));
        }
        let mut r = rng::seeded(seed);
        let blocks = (0..n_blocks)
            .map(|_| ResidualBlock::init(graph, n_features, block_cfg, &mut r))
            .collect::<Result<Vec<_>>>()?;
        Self::from_blocks(graph, blocks, inversion)
    }

    pub fn from_blocks(
        graph: &SpatialGraph,
        blocks: Vec<ResidualBlock>,
        inversion: InversionConfig,
    ) -> Result<Self> {
        inversion.validate()?;
        let Some(first) = blocks.first() else {
            return Err(invalid("a transform needs at least one block"));
        };
        let d = first.n_features();
        for b in &blocks {
            if b.graph() != graph {
                return Err(invalid("all blocks must share the transform graph"));
            }
            if b.n_features() != d {
                return Err(shape_err("block feature dimension", d, b.n_features()));
            }
        }
        Ok(Self {
            blocks,
            graph: graph.clone(),
            inversion,
        })
    }

    pub fn blocks(&self) -> &[ResidualBlock] {
        &self.blocks
    }

    pub fn blocks_mut(&mut self) -> &mut [ResidualBlock] {
        &mut self.blocks
    }

    pub fn graph(&self) -> &SpatialGraph {
        &self.graph
    }

    pub fn n_features(&self) -> usize {
        self.blocks[0].n_features()
    }

    pub fn lipschitz_bounds(&self) -> Vec<f64> {
        self.blocks.iter().map(block_lipschitz_bound).collect()
    }

    pub fn is_certified(&self) -> bool {
        self.blocks.iter().all(ResidualBlock::is_certified)
    }

    /// Weight projection and `gamma` clamping on every block.
    pub fn project(&mut self) {
        for b in &mut self.blocks {
            b.project_weights();
            b.cn.clamp_gamma();
        }
    }

    pub fn register(&self, tape: &mut GradientTape) -> Vec<BlockVars> {
        self.blocks.iter().map(|b| b.register(tape)).collect()
    }

    pub fn forward_on_tape(&self, tape: &mut GradientTape, x: Var, vars: &[BlockVars]) -> Result<Var> {
        let mut h = x;
        for (b, v) in self.blocks.iter().zip(vars) {
            h = b.forward_on_tape(tape, h, v)?;
        }
        Ok(h)
    }

    pub fn inverse_on_tape(&self, tape: &mut GradientTape, z: Var, vars: &[BlockVars]) -> Result<Var> {
        let mut h = z;
        for (i, (b, v)) in self.blocks.iter().zip(vars).enumerate().rev() {
            h = b
                .inverse_on_tape(tape, h, v, &self.inversion)
                .map_err(|e| attach_block(e, i))?;
        }
        Ok(h)
    }
}

fn attach_block(e: Error, block: usize) -> Error {
    match e {
        Error::Divergence(report) => Error::BlockDivergence { block, report },
        other => other,
    }
}

pub fn transform_forward(x: &Tensor3, t: &RrnTransform) -> Result<Tensor3> {
    let mut h = x.clone();
    for b in &t.blocks {
        h = block_forward(&h, b)?;
    }
    Ok(h)
}

/// Inverts each block in reverse order with the transform's inversion config.
///
/// The window length of `z` may differ from the one used in the forward pass.
pub fn transform_inverse(z: &Tensor3, t: &RrnTransform) -> Result<Tensor3> {
    transform_inverse_with(z, t, &t.inversion)
}

pub fn transform_inverse_with(z: &Tensor3, t: &RrnTransform, cfg: &InversionConfig) -> Result<Tensor3> {
    let mut h = z.clone();
    for (i, b) in t.blocks.iter().enumerate().rev() {
        h = block_inverse(&h, b, cfg).map_err(|e| attach_block(e, i))?.x;
    }
    Ok(h)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundtripRow {
    pub iterations: usize,
    /// Mean absolute elementwise error of `T⁻¹(T(x))` against `x`; `+∞` if the solve diverged.
    pub mean_abs_error: f64,
}

/// Round-trip reconstruction error at each per-block iteration budget in `grid`.
///
/// Every cell runs exactly its iteration count (no early stop).
pub fn roundtrip_report(x: &Tensor3, t: &RrnTransform, grid: &[usize]) -> Result<Vec<RoundtripRow>> {
    let z = transform_forward(x, t)?;
    grid.iter()
        .map(|&iterations| {
            let cfg = InversionConfig {
                max_iters: iterations,
                tol: f64::MIN_POSITIVE,
                unroll_for_gradient: false,
            };
            let mean_abs_error = match transform_inverse_with(&z, t, &cfg) {
                Ok(rec) => {
                    let e = rec.mean_abs_diff(x);
                    if e.is_finite() {
                        e
                    } else {
                        f64::INFINITY
                    }
                }
                Err(Error::BlockDivergence { .. }) => f64::INFINITY,
                Err(e) => return Err(e),
            };
            Ok(RoundtripRow {
                iterations,
                mean_abs_error,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Matrix;

    fn path_graph(n: usize) -> SpatialGraph {
        let a = Matrix::from_fn(n, n, |i, j| if i.abs_diff(j) == 1 { 1.0 } else { 0.0 });
        SpatialGraph::from_adjacency(a).unwrap()
    }

    #[test]
    fn identity_stack() {
        let g = path_graph(3);
        let mut t = RrnTransform::init(&g, 2, 2, &BlockConfig::default(), InversionConfig::default(), 1).unwrap();
        for b in t.blocks_mut() {
            for w in b.weights.matrices_mut() {
                w.scale_in_place(0.0);
            }
        }
        let x = rng::gaussian_tensor(&mut rng::seeded(9), (4, 3, 2));
        assert_eq!(transform_forward(&x, &t).unwrap(), x);
        assert_eq!(transform_inverse(&x, &t).unwrap(), x);
        let rows = roundtrip_report(&x, &t, &DEFAULT_ITERATION_GRID).unwrap();
        assert!(rows.iter().all(|r| r.mean_abs_error == 0.0));
    }

    #[test]
    fn single_block_equals_block_forward() {
        let g = path_graph(3);
        let t = RrnTransform::init(&g, 2, 1, &BlockConfig::default(), InversionConfig::default(), 2).unwrap();
        let x = rng::gaussian_tensor(&mut rng::seeded(3), (4, 3, 2));
        assert_eq!(transform_forward(&x, &t).unwrap(), block_forward(&x, &t.blocks()[0]).unwrap());
    }

    #[test]
    fn mixed_graphs_are_rejected() {
        let b1 = ResidualBlock::init(&path_graph(3), 2, &BlockConfig::default(), &mut rng::seeded(1)).unwrap();
        assert!(RrnTransform::from_blocks(&SpatialGraph::isolated(3), alloc::vec![b1], InversionConfig::default()).is_err());
        assert!(RrnTransform::from_blocks(&path_graph(3), Vec::new(), InversionConfig::default()).is_err());
    }
}

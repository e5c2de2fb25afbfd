//! The invertible residual block `H(X) = X + σ(Â · CN(X) · W)`.
//!
//! The residual branch `g` is kept contractive by capping the Frobenius norm of
//! its weights. With `Lip(σ) = 1` and `‖Â‖₂ = 1` the chain rule gives
//!
//! ```text
//! Lip(g) ≤ Lip(σ) · ‖Â‖₂ · α · max|γ| · ∏ ‖Wᵢ‖_F
//! ```
//!
//! The weight product is capped at the contraction target `c`, so a block with
//! `α · max|γ| ≤ 1` and `c < 1` is a contraction and `H` can be inverted by the
//! fixed-point iteration `x ← Z − g(x)`.

use alloc::vec::Vec;

use crate::error::{invalid, shape_err, DivergenceReport, Error, Result};
use crate::graph::SpatialGraph;
use crate::normalization::{center_norm, center_norm_lipschitz, CenterNormParams};
use crate::numerics::{frobenius_norm, rng, Activation, GradientTape, Matrix, Tensor3, Var};

/// Number of consecutive step-size increases treated as divergence.
pub const DIVERGENCE_STREAK: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub enum BlockWeights {
    /// `W₁ (D × h)` followed by `W₂ (h × D)`; the activation sits between them.
    Hidden { input: Matrix, output: Matrix },
    /// A single square `W (D × D)` followed by the activation.
    Single(Matrix),
}

impl BlockWeights {
    pub fn matrices(&self) -> Vec<&Matrix> {
        match self {
            BlockWeights::Hidden { input, output } => alloc::vec![input, output],
            BlockWeights::Single(w) => alloc::vec![w],
        }
    }

    pub fn matrices_mut(&mut self) -> Vec<&mut Matrix> {
        match self {
            BlockWeights::Hidden { input, output } => alloc::vec![input, output],
            BlockWeights::Single(w) => alloc::vec![w],
        }
    }

    pub fn hidden(&self) -> Option<usize> {
        match self {
            BlockWeights::Hidden { input, .. } => Some(input.cols()),
            BlockWeights::Single(_) => None,
        }
    }
}

/// Hyper-parameters needed to build a fresh block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockConfig {
    pub alpha: f64,
    pub contraction_target: f64,
    pub activation: Activation,
    /// Hidden width `h`; `None` selects the single square weight.
    pub hidden: Option<usize>,
}

impl Default for BlockConfig {
    fn default() -> Self {
        Self {
            alpha: 0.9,
            contraction_target: 0.9,
            activation: Activation::Tanh,
            hidden: Some(32),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InversionConfig {
    pub max_iters: usize,
    /// Early stop once the sup-norm of a step falls below this.
    pub tol: f64,
    pub unroll_for_gradient: bool,
}

impl Default for InversionConfig {
    fn default() -> Self {
        Self {
            max_iters: 50,
            tol: 1e-9,
            unroll_for_gradient: true,
        }
    }
}

impl InversionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(invalid("inversion needs max_iters >= 1"));
        }
        if !(self.tol > 0.0) {
            return Err(invalid("inversion needs tol > 0"));
        }
        Ok(())
    }

    pub fn with_max_iters(&self, max_iters: usize) -> Self {
        Self {
            max_iters,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualBlock {
    pub cn: CenterNormParams,
    pub weights: BlockWeights,
    pub activation: Activation,
    contraction_target: f64,
    graph: SpatialGraph,
}

/// Tape handles for one block's trainable parameters.
#[derive(Debug, Clone)]
pub struct BlockVars {
    pub gamma: Var,
    pub beta: Var,
    pub weights: Vec<Var>,
}

/// Result of a fixed-point solve.
#[derive(Debug, Clone, PartialEq)]
pub struct InverseSolution {
    pub x: Tensor3,
    pub iterations: usize,
    /// Sup-norm of the last step taken.
    pub last_step: f64,
    /// Whether the block carried a contraction certificate (`bound < 1`).
    pub certified: bool,
}

impl ResidualBlock {
    /// Fresh block with `gamma = 1`, `beta = 0` and uniform weights whose
    /// Frobenius norm starts near half of each matrix budget.
    pub fn init(
        graph: &SpatialGraph,
        n_features: usize,
        cfg: &BlockConfig,
        rng: &mut rng::SeededRng,
    ) -> Result<Self> {
        if n_features == 0 {
            return Err(invalid("blocks need at least one feature"));
        }
        if !(cfg.contraction_target > 0.0 && cfg.contraction_target.is_finite()) {
            return Err(invalid("contraction target must be positive"));
        }
        let cn = CenterNormParams::identity(cfg.alpha, graph.n_nodes(), n_features)?;
        let shapes: Vec<(usize, usize)> = match cfg.hidden {
            Some(0) => return Err(invalid("hidden width must be positive")),
            Some(h) => alloc::vec![(n_features, h), (h, n_features)],
            None => alloc::vec![(n_features, n_features)],
        };
        let budget = per_matrix_budget(cfg.contraction_target, cfg.activation, shapes.len());
        let mut mats: Vec<Matrix> = shapes
            .iter()
            .map(|&(r, c)| {
                let s = 0.5 * budget * libm::sqrt(3.0 / (r * c) as f64);
                rng::uniform_matrix(rng, r, c, s)
            })
            .collect();
        let weights = if mats.len() == 2 {
            let output = mats.pop().unwrap();
            let input = mats.pop().unwrap();
            BlockWeights::Hidden { input, output }
        } else {
            BlockWeights::Single(mats.pop().unwrap())
        };
        let mut block = Self {
            cn,
            weights,
            activation: cfg.activation,
            contraction_target: cfg.contraction_target,
            graph: graph.clone(),
        };
        block.project_weights();
        Ok(block)
    }

    pub fn from_parts(
        graph: &SpatialGraph,
        cn: CenterNormParams,
        weights: BlockWeights,
        activation: Activation,
        contraction_target: f64,
    ) -> Result<Self> {
        let n = graph.n_nodes();
        let d = cn.gamma.cols();
        if cn.gamma.rows() != n {
            return Err(shape_err("block gamma rows", n, cn.gamma.rows()));
        }
        match &weights {
            BlockWeights::Hidden { input, output } => {
                if input.rows() != d || output.cols() != d || input.cols() != output.rows() {
                    return Err(shape_err(
                        "block weights",
                        (d, "h", "h", d),
                        (input.rows(), input.cols(), output.rows(), output.cols()),
                    ));
                }
            }
            BlockWeights::Single(w) => {
                if w.shape() != (d, d) {
                    return Err(shape_err("block weight", (d, d), w.shape()));
                }
            }
        }
        for w in weights.matrices() {
            w.validate_finite("block weights")?;
        }
        if !(contraction_target > 0.0 && contraction_target.is_finite()) {
            return Err(invalid("contraction target must be positive"));
        }
        Ok(Self {
            cn,
            weights,
            activation,
            contraction_target,
            graph: graph.clone(),
        })
    }

    pub fn graph(&self) -> &SpatialGraph {
        &self.graph
    }

    pub fn n_features(&self) -> usize {
        self.cn.gamma.cols()
    }

    pub fn contraction_target(&self) -> f64 {
        self.contraction_target
    }

    /// Frobenius cap applied to each weight matrix.
    pub fn weight_budget(&self) -> f64 {
        per_matrix_budget(
            self.contraction_target,
            self.activation,
            self.weights.matrices().len(),
        )
    }

    /// Rescales any weight whose Frobenius norm exceeds its budget back onto the budget sphere.
    pub fn project_weights(&mut self) {
        let budget = self.weight_budget();
        for w in self.weights.matrices_mut() {
            let norm = frobenius_norm(w);
            if norm > budget {
                w.scale_in_place(budget / norm);
            }
        }
    }

    /// Rescales every nonzero weight so its Frobenius norm equals the budget exactly.
    pub fn saturate_weights(&mut self) {
        let budget = self.weight_budget();
        for w in self.weights.matrices_mut() {
            let norm = frobenius_norm(w);
            if norm > 0.0 {
                w.scale_in_place(budget / norm);
            }
        }
    }

    /// Replaces the weights with aligned rank-one matrices at the budget,
    /// `W₁ = s·a bᵀ`, `W₂ = s·b aᵀ` (or `W = s·a aᵀ`) for random unit `a`, `b`.
    ///
    /// Spectral and Frobenius norms coincide for rank-one matrices and the
    /// chain `W₁W₂ = s²·a aᵀ` keeps that norm, so the Lipschitz bound is
    /// attained along `a` in the small-signal regime. Reversibility sweeps use
    /// this to probe the bound rather than a loose random draw.
    pub fn set_rank_one_weights(&mut self, rng: &mut rng::SeededRng) {
        let budget = self.weight_budget();
        let d = self.n_features();
        let a = unit(rng::gaussian_vec(rng, d));
        match &mut self.weights {
            BlockWeights::Hidden { input, output } => {
                let b = unit(rng::gaussian_vec(rng, input.cols()));
                *input = Matrix::from_fn(d, b.len(), |i, k| budget * a[i] * b[k]);
                *output = Matrix::from_fn(b.len(), d, |k, j| budget * b[k] * a[j]);
            }
            BlockWeights::Single(w) => {
                *w = Matrix::from_fn(d, d, |i, j| budget * a[i] * a[j]);
            }
        }
    }

    pub fn is_certified(&self) -> bool {
        block_lipschitz_bound(self) < 1.0
    }

    fn check_input(&self, x: &Tensor3) -> Result<()> {
        let (_, n, d) = x.dims();
        if n != self.graph.n_nodes() || d != self.n_features() {
            return Err(shape_err(
                "block input (nodes, features)",
                (self.graph.n_nodes(), self.n_features()),
                (n, d),
            ));
        }
        if x.len_time() == 0 {
            return Err(invalid("block input needs at least one time step"));
        }
        Ok(())
    }

    /// The residual branch `g(X) = σ(Â · CN(X) · W₁) · W₂` (or `σ(Â · CN(X) · W)`).
    pub fn residual(&self, x: &Tensor3) -> Result<Tensor3> {
        self.check_input(x)?;
        let mixed = center_norm(x, &self.cn)?.graph_mix(self.graph.normalized())?;
        let act = self.activation;
        match &self.weights {
            BlockWeights::Hidden { input, output } => mixed
                .feature_matmul(input)?
                .map(|v| act.apply(v))
                .feature_matmul(output),
            BlockWeights::Single(w) => Ok(mixed.feature_matmul(w)?.map(|v| act.apply(v))),
        }
    }

    pub fn register(&self, tape: &mut GradientTape) -> BlockVars {
        BlockVars {
            gamma: tape.matrix_leaf(self.cn.gamma.clone()),
            beta: tape.matrix_leaf(self.cn.beta.clone()),
            weights: self
                .weights
                .matrices()
                .into_iter()
                .map(|w| tape.matrix_leaf(w.clone()))
                .collect(),
        }
    }

    pub fn residual_on_tape(&self, tape: &mut GradientTape, x: Var, vars: &BlockVars) -> Result<Var> {
        self.check_input(tape.tensor(x)?)?;
        let c = tape.center_norm(x, vars.gamma, vars.beta, self.cn.alpha())?;
        let mixed = tape.graph_mix(c, self.graph.normalized_shared())?;
        match vars.weights.as_slice() {
            [w1, w2] => {
                let pre = tape.feature_matmul(mixed, *w1)?;
                let h = tape.activation(pre, self.activation)?;
                tape.feature_matmul(h, *w2)
            }
            [w] => {
                let pre = tape.feature_matmul(mixed, *w)?;
                tape.activation(pre, self.activation)
            }
            _ => Err(invalid("block tape vars carry the wrong number of weights")),
        }
    }

    pub fn forward_on_tape(&self, tape: &mut GradientTape, x: Var, vars: &BlockVars) -> Result<Var> {
        let g = self.residual_on_tape(tape, x, vars)?;
        tape.add(x, g)
    }

    /// Fixed-point inversion recorded on the tape, unrolled through the
    /// iterations that actually execute.
    ///
    /// With `unroll_for_gradient` off, the solve runs off the tape and only a
    /// final step `Z − g(x*)` is recorded, a one-step gradient approximation.
    pub fn inverse_on_tape(
        &self,
        tape: &mut GradientTape,
        z: Var,
        vars: &BlockVars,
        cfg: &InversionConfig,
    ) -> Result<Var> {
        cfg.validate()?;
        if !cfg.unroll_for_gradient {
            let solved = block_inverse(tape.tensor(z)?, self, cfg)?.x;
            let fixed = tape.tensor_leaf(solved);
            let g = self.residual_on_tape(tape, fixed, vars)?;
            return tape.sub(z, g);
        }
        let mut tracker = DivergenceTracker::new(tape.tensor(z)?);
        let mut x = z;
        for _ in 0..cfg.max_iters {
            let g = self.residual_on_tape(tape, x, vars)?;
            let next = tape.sub(z, g)?;
            let step = tracker.observe(tape.tensor(x)?, tape.tensor(next)?)?;
            x = next;
            if step < cfg.tol {
                break;
            }
        }
        Ok(x)
    }
}

/// `(c / Lip(σ))^{1/k}` for a block with `k` weight matrices, so that the
/// product of the capped norms equals `c / Lip(σ)`.
pub fn per_matrix_budget(contraction_target: f64, activation: Activation, k: usize) -> f64 {
    libm::pow(contraction_target / activation.lipschitz(), 1.0 / k as f64)
}

/// `X + g(X)`.
pub fn block_forward(x: &Tensor3, b: &ResidualBlock) -> Result<Tensor3> {
    let g = b.residual(x)?;
    Ok(x.add(&g))
}

/// Solves `H(x) = Z` by iterating `x ← Z − g(x)` from `x = Z`.
///
/// Stops once a step's sup-norm falls below `cfg.tol` or after
/// `cfg.max_iters` iterations. If the Euclidean step length grows
/// [`DIVERGENCE_STREAK`] times in a row (impossible for a contraction) or an
/// iterate stops being finite, the solve aborts with [`Error::Divergence`].
pub fn block_inverse(z: &Tensor3, b: &ResidualBlock, cfg: &InversionConfig) -> Result<InverseSolution> {
    cfg.validate()?;
    b.check_input(z)?;
    let mut tracker = DivergenceTracker::new(z);
    let mut x = z.clone();
    let mut last_step = f64::INFINITY;
    let mut iterations = 0;
    for _ in 0..cfg.max_iters {
        let next = z.sub(&b.residual(&x)?);
        last_step = tracker.observe(&x, &next)?;
        x = next;
        iterations += 1;
        if last_step < cfg.tol {
            break;
        }
    }
    Ok(InverseSolution {
        x,
        iterations,
        last_step,
        certified: b.is_certified(),
    })
}

/// `Lip(σ) · ‖Â‖₂ · α · max|γ| · ∏ ‖Wᵢ‖_F` with `‖Â‖₂ = 1`.
pub fn block_lipschitz_bound(b: &ResidualBlock) -> f64 {
    let weights: f64 = b.weights.matrices().into_iter().map(frobenius_norm).product();
    b.activation.lipschitz() * center_norm_lipschitz(&b.cn) * weights
}

fn unit(mut v: Vec<f64>) -> Vec<f64> {
    let n = libm::sqrt(v.iter().map(|x| x * x).sum());
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    v
}

struct DivergenceTracker {
    steps: Vec<f64>,
    iterates: Vec<f64>,
    streak: usize,
}

impl DivergenceTracker {
    fn new(start: &Tensor3) -> Self {
        Self {
            steps: Vec::new(),
            iterates: alloc::vec![start.sup_norm()],
            streak: 0,
        }
    }

    /// Records one step and returns its sup-norm.
    fn observe(&mut self, prev: &Tensor3, next: &Tensor3) -> Result<f64> {
        let step_l2 = libm::sqrt(
            prev.as_slice()
                .iter()
                .zip(next.as_slice())
                .map(|(a, b)| (a - b) * (a - b))
                .sum(),
        );
        let step_sup = prev.max_abs_diff(next);
        self.iterates.push(next.sup_norm());
        let grew = self.steps.last().is_some_and(|&s| step_l2 > s);
        self.steps.push(step_l2);
        self.streak = if grew { self.streak + 1 } else { 0 };
        if !step_l2.is_finite() || self.streak >= DIVERGENCE_STREAK {
            return Err(Error::Divergence(DivergenceReport {
                iterations: self.steps.len(),
                step_norms: core::mem::take(&mut self.steps),
                iterate_norms: core::mem::take(&mut self.iterates),
            }));
        }
        Ok(step_sup)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_graph() -> SpatialGraph {
        let a = Matrix::from_rows(&[&[0.0, 1.0, 0.0], &[1.0, 0.0, 0.5], &[0.0, 0.5, 0.0]]).unwrap();
        SpatialGraph::from_adjacency(a).unwrap()
    }

    fn toy_block(seed: u64, cfg: &BlockConfig) -> ResidualBlock {
        ResidualBlock::init(&toy_graph(), 2, cfg, &mut rng::seeded(seed)).unwrap()
    }

    fn zero_weights(b: &mut ResidualBlock) {
        for w in b.weights.matrices_mut() {
            w.scale_in_place(0.0);
        }
    }

    #[test]
    fn zero_weights_give_identity() {
        let mut b = toy_block(1, &BlockConfig::default());
        zero_weights(&mut b);
        let x = rng::gaussian_tensor(&mut rng::seeded(2), (4, 3, 2));
        assert_eq!(block_forward(&x, &b).unwrap(), x);
        let sol = block_inverse(&x, &b, &InversionConfig::default()).unwrap();
        assert_eq!(sol.x, x);
        assert_eq!(sol.iterations, 1);
        assert_eq!(block_lipschitz_bound(&b), 0.0);
    }

    #[test]
    fn constant_input_passes_through() {
        let b = toy_block(3, &BlockConfig::default());
        let x = Tensor3::from_fn((5, 3, 2), |_, n, d| n as f64 - d as f64 * 2.0);
        assert_eq!(block_forward(&x, &b).unwrap(), x);
    }

    #[test]
    fn projection_rescales_and_is_idempotent() {
        let mut b = toy_block(4, &BlockConfig::default());
        for w in b.weights.matrices_mut() {
            w.scale_in_place(100.0);
        }
        b.project_weights();
        let budget = b.weight_budget();
        for w in b.weights.matrices() {
            assert!((frobenius_norm(w) - budget).abs() < 1e-12);
        }
        let before = b.clone();
        b.project_weights();
        assert_eq!(before, b);
    }

    #[test]
    fn projection_leaves_small_weights() {
        let cfg = BlockConfig {
            hidden: None,
            ..BlockConfig::default()
        };
        let mut b = toy_block(5, &cfg);
        let BlockWeights::Single(w) = &mut b.weights else { unreachable!() };
        *w = Matrix::from_rows(&[&[0.3, 0.0], &[0.0, 0.4]]).unwrap();
        let before = b.clone();
        b.project_weights();
        assert_eq!(before, b);

        let BlockWeights::Single(w) = &mut b.weights else { unreachable!() };
        *w = Matrix::from_rows(&[&[5.4, 0.0], &[0.0, 7.2]]).unwrap();
        b.project_weights();
        let BlockWeights::Single(w) = &b.weights else { unreachable!() };
        assert!((frobenius_norm(w) - 0.9).abs() < 1e-12);
        assert!((w[(0, 0)] - 0.54).abs() < 1e-12);
    }

    #[test]
    fn bound_is_product_of_factors() {
        let cfg = BlockConfig {
            hidden: None,
            ..BlockConfig::default()
        };
        let mut b = toy_block(6, &cfg);
        b.saturate_weights();
        assert!((block_lipschitz_bound(&b) - 0.81).abs() < 1e-12);
        assert!(b.is_certified());
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let b = toy_block(7, &BlockConfig::default());
        assert!(block_forward(&Tensor3::zeros((4, 2, 2)), &b).is_err());
        assert!(block_forward(&Tensor3::zeros((4, 3, 1)), &b).is_err());
    }

    #[test]
    fn inversion_config_validation() {
        let b = toy_block(8, &BlockConfig::default());
        let z = Tensor3::zeros((2, 3, 2));
        let bad = InversionConfig {
            max_iters: 0,
            ..InversionConfig::default()
        };
        assert!(block_inverse(&z, &b, &bad).is_err());
    }
}

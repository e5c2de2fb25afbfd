//! Forecasting backbones, the transform → predict → inverse pipeline, training and evaluation.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::block::{block_lipschitz_bound, BlockVars};
use crate::data::{FeatureScaler, Window, WindowedSplits};
use crate::error::{invalid, shape_err, Error, Result};
use crate::graph::SpatialGraph;
use crate::numerics::{compare_with_central_differences, rng, Activation, GradientTape, Matrix, Tensor3, Var};
use crate::transform::{transform_forward, transform_inverse, RrnTransform};

/// Horizon steps reported by default (1-based).
pub const DEFAULT_REPORT_STEPS: [usize; 3] = [3, 6, 12];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackboneKind {
    /// One `H × L` matrix plus an `H` bias shared by every (node, feature) series.
    PerNodeLinear,
    /// Temporal hidden layer, tanh, one `Â` mix, then projection to `H` steps.
    GraphMlp,
}

impl BackboneKind {
    pub fn name(self) -> &'static str {
        match self {
            BackboneKind::PerNodeLinear => "per_node_linear",
            BackboneKind::GraphMlp => "graph_mlp",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "per_node_linear" => Some(BackboneKind::PerNodeLinear),
            "graph_mlp" => Some(BackboneKind::GraphMlp),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BackboneSpec {
    pub kind: BackboneKind,
    pub lookback: usize,
    pub horizon: usize,
    /// Hidden width for [`BackboneKind::GraphMlp`]; ignored otherwise.
    pub hidden: usize,
}

impl BackboneSpec {
    pub fn per_node_linear(lookback: usize, horizon: usize) -> Self {
        Self {
            kind: BackboneKind::PerNodeLinear,
            lookback,
            horizon,
            hidden: 0,
        }
    }

    pub fn graph_mlp(lookback: usize, horizon: usize, hidden: usize) -> Self {
        Self {
            kind: BackboneKind::GraphMlp,
            lookback,
            horizon,
            hidden,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.lookback == 0 || self.horizon == 0 {
            return Err(invalid("backbone lookback and horizon must be positive"));
        }
        if self.kind == BackboneKind::GraphMlp && self.hidden == 0 {
            return Err(invalid("graph_mlp needs a positive hidden width"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BackboneParams {
    PerNodeLinear {
        m: Matrix,
        bias: Vec<f64>,
    },
    GraphMlp {
        w_in: Matrix,
        b_in: Vec<f64>,
        w_out: Matrix,
        b_out: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Backbone {
    spec: BackboneSpec,
    graph: SpatialGraph,
    pub params: BackboneParams,
}

impl Backbone {
    /// Uniform weights in `±1/√fan_in`, zero biases.
    pub fn init(spec: BackboneSpec, graph: &SpatialGraph, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut r = rng::seeded(seed);
        let (l, h) = (spec.lookback, spec.horizon);
        let params = match spec.kind {
            BackboneKind::PerNodeLinear => BackboneParams::PerNodeLinear {
                m: rng::uniform_matrix(&mut r, h, l, 1.0 / libm::sqrt(l as f64)),
                bias: vec![0.0; h],
            },
            BackboneKind::GraphMlp => BackboneParams::GraphMlp {
                w_in: rng::uniform_matrix(&mut r, spec.hidden, l, 1.0 / libm::sqrt(l as f64)),
                b_in: vec![0.0; spec.hidden],
                w_out: rng::uniform_matrix(&mut r, h, spec.hidden, 1.0 / libm::sqrt(spec.hidden as f64)),
                b_out: vec![0.0; h],
            },
        };
        Ok(Self {
            spec,
            graph: graph.clone(),
            params,
        })
    }

    pub fn from_params(spec: BackboneSpec, graph: &SpatialGraph, params: BackboneParams) -> Result<Self> {
        spec.validate()?;
        let (l, h, k) = (spec.lookback, spec.horizon, spec.hidden);
        let ok = match (&params, spec.kind) {
            (BackboneParams::PerNodeLinear { m, bias }, BackboneKind::PerNodeLinear) => {
                m.shape() == (h, l) && bias.len() == h
            }
            (BackboneParams::GraphMlp { w_in, b_in, w_out, b_out }, BackboneKind::GraphMlp) => {
                w_in.shape() == (k, l) && b_in.len() == k && w_out.shape() == (h, k) && b_out.len() == h
            }
            _ => false,
        };
        if !ok {
            return Err(invalid("backbone parameters do not match the spec"));
        }
        Ok(Self {
            spec,
            graph: graph.clone(),
            params,
        })
    }

    /// `per_node_linear` repeating the last input step: the persistence forecast.
    pub fn persistence(lookback: usize, horizon: usize, graph: &SpatialGraph) -> Result<Self> {
        let m = Matrix::from_fn(horizon, lookback, |_, l| if l + 1 == lookback { 1.0 } else { 0.0 });
        Self::from_params(
            BackboneSpec::per_node_linear(lookback, horizon),
            graph,
            BackboneParams::PerNodeLinear {
                m,
                bias: vec![0.0; horizon],
            },
        )
    }

    pub fn spec(&self) -> &BackboneSpec {
        &self.spec
    }

    pub fn graph(&self) -> &SpatialGraph {
        &self.graph
    }

    fn check_input(&self, z: &Tensor3) -> Result<()> {
        if z.len_time() != self.spec.lookback || z.n_nodes() != self.graph.n_nodes() {
            return Err(shape_err(
                "backbone input (L, N)",
                (self.spec.lookback, self.graph.n_nodes()),
                (z.len_time(), z.n_nodes()),
            ));
        }
        Ok(())
    }

    /// `[L × N × D] → [H × N × D]`.
    pub fn predict(&self, z: &Tensor3) -> Result<Tensor3> {
        self.check_input(z)?;
        match &self.params {
            BackboneParams::PerNodeLinear { m, bias } => z.time_matmul(m)?.add_time_bias(bias),
            BackboneParams::GraphMlp { w_in, b_in, w_out, b_out } => z
                .time_matmul(w_in)?
                .add_time_bias(b_in)?
                .map(libm::tanh)
                .graph_mix(self.graph.normalized())?
                .time_matmul(w_out)?
                .add_time_bias(b_out),
        }
    }

    /// Registers parameters in the order of [`param_slices_mut`](Self::param_slices_mut).
    pub fn register(&self, tape: &mut GradientTape) -> Vec<Var> {
        match &self.params {
            BackboneParams::PerNodeLinear { m, bias } => {
                vec![tape.matrix_leaf(m.clone()), tape.vector_leaf(bias.clone())]
            }
            BackboneParams::GraphMlp { w_in, b_in, w_out, b_out } => vec![
                tape.matrix_leaf(w_in.clone()),
                tape.vector_leaf(b_in.clone()),
                tape.matrix_leaf(w_out.clone()),
                tape.vector_leaf(b_out.clone()),
            ],
        }
    }

    pub fn forward_on_tape(&self, tape: &mut GradientTape, z: Var, vars: &[Var]) -> Result<Var> {
        self.check_input(tape.tensor(z)?)?;
        match (self.spec.kind, vars) {
            (BackboneKind::PerNodeLinear, [m, b]) => {
                let p = tape.time_matmul(*m, z)?;
                tape.time_bias(p, *b)
            }
            (BackboneKind::GraphMlp, [w_in, b_in, w_out, b_out]) => {
                let h = tape.time_matmul(*w_in, z)?;
                let h = tape.time_bias(h, *b_in)?;
                let h = tape.activation(h, Activation::Tanh)?;
                let h = tape.graph_mix(h, self.graph.normalized_shared())?;
                let o = tape.time_matmul(*w_out, h)?;
                tape.time_bias(o, *b_out)
            }
            _ => Err(invalid("backbone tape vars do not match the spec")),
        }
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        match &mut self.params {
            BackboneParams::PerNodeLinear { m, bias } => vec![m.as_mut_slice(), bias.as_mut_slice()],
            BackboneParams::GraphMlp { w_in, b_in, w_out, b_out } => vec![
                w_in.as_mut_slice(),
                b_in.as_mut_slice(),
                w_out.as_mut_slice(),
                b_out.as_mut_slice(),
            ],
        }
    }
}

/// `f_θ(Z)` free-function form of [`Backbone::predict`].
pub fn backbone_predict(z: &Tensor3, b: &Backbone) -> Result<Tensor3> {
    b.predict(z)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossSpace {
    /// MAE of `T⁻¹(f(T(X)))` against `Y`.
    #[default]
    Original,
    /// MAE of `f(T(X))` against `T(Y)`, with `T(Y)` held constant.
    Latent,
}

impl LossSpace {
    pub fn name(self) -> &'static str {
        match self {
            LossSpace::Original => "original",
            LossSpace::Latent => "latent",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "original" => Some(LossSpace::Original),
            "latent" => Some(LossSpace::Latent),
            _ => None,
        }
    }
}

/// A backbone, optionally wrapped by an invertible transform.
#[derive(Debug, Clone, PartialEq)]
pub struct Forecaster {
    pub transform: Option<RrnTransform>,
    pub backbone: Backbone,
}

impl Forecaster {
    pub fn new(transform: Option<RrnTransform>, backbone: Backbone) -> Result<Self> {
        if let Some(t) = &transform {
            if t.graph() != backbone.graph() {
                return Err(invalid("transform and backbone must share a graph"));
            }
        }
        Ok(Self { transform, backbone })
    }

    /// `T⁻¹(f(T(X)))`, or `f(X)` without a transform.
    pub fn predict(&self, x: &Tensor3) -> Result<Tensor3> {
        match &self.transform {
            Some(t) => transform_inverse(&self.backbone.predict(&transform_forward(x, t)?)?, t),
            None => self.backbone.predict(x),
        }
    }

    /// Transform parameters block by block (`gamma`, `beta`, weights) then the backbone's.
    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        if let Some(t) = &mut self.transform {
            for b in t.blocks_mut() {
                out.push(b.cn.gamma.as_mut_slice());
                out.push(b.cn.beta.as_mut_slice());
                for w in b.weights.matrices_mut() {
                    out.push(w.as_mut_slice());
                }
            }
        }
        out.extend(self.backbone.param_slices_mut());
        out
    }

    fn param_sizes(&mut self) -> Vec<usize> {
        self.param_slices_mut().iter().map(|s| s.len()).collect()
    }

    /// Loss of one window and its gradient, one vector per parameter slice.
    pub fn loss_and_gradient(&self, w: &Window, loss_space: LossSpace) -> Result<(f64, Vec<Vec<f64>>)> {
        let mut tape = GradientTape::new();
        let tvars: Option<Vec<BlockVars>> = self.transform.as_ref().map(|t| t.register(&mut tape));
        let bvars = self.backbone.register(&mut tape);
        let x = tape.tensor_leaf(w.x.clone());
        let z = match (&self.transform, &tvars) {
            (Some(t), Some(v)) => t.forward_on_tape(&mut tape, x, v)?,
            _ => x,
        };
        let zh = self.backbone.forward_on_tape(&mut tape, z, &bvars)?;
        let loss = match (&self.transform, &tvars, loss_space) {
            (Some(t), Some(v), LossSpace::Original) => {
                let yh = t.inverse_on_tape(&mut tape, zh, v)?;
                tape.mean_abs_error(yh, &w.y)?
            }
            (Some(t), Some(_), LossSpace::Latent) => {
                let zy = transform_forward(&w.y, t)?;
                tape.mean_abs_error(zh, &zy)?
            }
            _ => tape.mean_abs_error(zh, &w.y)?,
        };
        let grads = tape.backward(loss)?;

        let mut vars: Vec<Var> = Vec::new();
        for bv in tvars.iter().flatten() {
            vars.push(bv.gamma);
            vars.push(bv.beta);
            vars.extend(bv.weights.iter().copied());
        }
        vars.extend(bvars);
        let flat = vars
            .iter()
            .map(|&v| {
                let n = tape.value(v).as_slice().len();
                grads.get(v).map_or_else(|| vec![0.0; n], |g| g.as_slice().to_vec())
            })
            .collect();
        Ok((tape.scalar(loss)?, flat))
    }

    /// Weight projection and `gamma` clamping; a no-op without a transform.
    pub fn project(&mut self) {
        if let Some(t) = &mut self.transform {
            t.project();
        }
    }

    /// Largest block Lipschitz bound, `0` without a transform.
    pub fn max_block_bound(&self) -> f64 {
        self.transform
            .as_ref()
            .map_or(0.0, |t| t.blocks().iter().map(block_lipschitz_bound).fold(0.0, f64::max))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Optimizer::Sgd => "sgd",
            Optimizer::Adam { .. } => "adam",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "sgd" => Some(Optimizer::Sgd),
            "adam" => Some(Self::adam()),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Shared by transform and backbone parameters. Zero freezes both.
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub seed: u64,
    pub loss_space: LossSpace,
    pub optimizer: Optimizer,
    /// Global gradient-norm cap applied before each step.
    pub grad_clip: f64,
    /// Refuse to start from a transform with any block bound `>= 1`.
    pub require_certified: bool,
    /// Inversion tolerance used while training; the transform's own
    /// setting is restored afterwards.
    pub inversion_tol: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-3,
            batch_size: 64,
            max_epochs: 100,
            early_stop_patience: 10,
            seed: 0,
            loss_space: LossSpace::Original,
            optimizer: Optimizer::Sgd,
            grad_clip: 5.0,
            require_certified: true,
            inversion_tol: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid("learning_rate must be finite and nonnegative"));
        }
        if self.batch_size == 0 {
            return Err(invalid("batch_size must be at least 1"));
        }
        if !(self.grad_clip > 0.0) {
            return Err(invalid("grad_clip must be positive"));
        }
        if self.inversion_tol.is_some_and(|t| !(t > 0.0)) {
            return Err(invalid("inversion_tol must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mae: f64,
    pub val_mae: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub curve: Vec<EpochRecord>,
    /// Epoch whose parameters were kept (0 = initialization).
    pub best_epoch: usize,
    pub steps: usize,
    /// Largest post-projection block bound seen after any step.
    pub max_block_bound: f64,
    /// Whether every block carried `bound < 1` after every step.
    pub certified_every_step: bool,
}

struct OptimizerState {
    kind: Optimizer,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl OptimizerState {
    fn new(kind: Optimizer, sizes: &[usize]) -> Self {
        let zeros = |_| sizes.iter().map(|&n| vec![0.0; n]).collect();
        Self {
            kind,
            m: zeros(()),
            v: zeros(()),
            t: 0,
        }
    }

    fn step(&mut self, params: Vec<&mut [f64]>, grads: &[Vec<f64>], lr: f64) {
        self.t += 1;
        for (k, (p, g)) in params.into_iter().zip(grads).enumerate() {
            match self.kind {
                Optimizer::Sgd => p.iter_mut().zip(g).for_each(|(p, g)| *p -= lr * g),
                Optimizer::Adam { beta1, beta2, eps } => {
                    let c1 = 1.0 - libm::pow(beta1, self.t as f64);
                    let c2 = 1.0 - libm::pow(beta2, self.t as f64);
                    for (i, (p, &g)) in p.iter_mut().zip(g).enumerate() {
                        let m = &mut self.m[k][i];
                        let v = &mut self.v[k][i];
                        *m = beta1 * *m + (1.0 - beta1) * g;
                        *v = beta2 * *v + (1.0 - beta2) * g * g;
                        *p -= lr * (*m / c1) / (libm::sqrt(*v / c2) + eps);
                    }
                }
            }
        }
    }
}

/// Max relative error between [`Forecaster::loss_and_gradient`] and central
/// differences over every parameter of `model`.
pub fn parameter_gradcheck(model: &Forecaster, w: &Window, loss_space: LossSpace, eps: f64) -> Result<f64> {
    let (_, grads) = model.loss_and_gradient(w, loss_space)?;
    let analytic: Vec<f64> = grads.concat();
    let mut probe = model.clone();
    let point: Vec<f64> = probe.param_slices_mut().iter().flat_map(|s| s.iter().copied()).collect();
    compare_with_central_differences(
        &analytic,
        &point,
        |p| {
            let mut m = model.clone();
            let mut offset = 0;
            for s in m.param_slices_mut() {
                s.copy_from_slice(&p[offset..offset + s.len()]);
                offset += s.len();
            }
            Ok(m.loss_and_gradient(w, loss_space)?.0)
        },
        eps,
    )
}

/// Mean prediction MAE over `windows`, in the scaled units the windows carry.
pub fn mean_window_mae(model: &Forecaster, windows: &[Window]) -> Result<f64> {
    if windows.is_empty() {
        return Err(invalid("no windows to score"));
    }
    let mut total = 0.0;
    for w in windows {
        total += model.predict(&w.x)?.mean_abs_diff(&w.y);
    }
    Ok(total / windows.len() as f64)
}

/// Minibatch training of transform and backbone together.
///
/// Each step averages per-window gradients, clips the global norm, updates,
/// then projects every block back under its weight budget and clamps `gamma`.
/// The parameters with the lowest validation MAE are restored at the end.
pub fn train(model: &mut Forecaster, data: &WindowedSplits, cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    if data.train.is_empty() || data.val.is_empty() {
        return Err(invalid("training needs nonempty train and validation splits"));
    }
    if let (Some(t), true) = (&model.transform, cfg.require_certified) {
        if !t.is_certified() {
            return Err(invalid("transform is not certified (some block bound >= 1)"));
        }
    }
    let saved_inversion = model.transform.as_ref().map(|t| t.inversion.clone());
    if let (Some(t), Some(tol)) = (&mut model.transform, cfg.inversion_tol) {
        t.inversion.tol = tol;
    }
    let result = train_loop(model, data, cfg);
    if let (Some(t), Some(inv)) = (&mut model.transform, saved_inversion) {
        t.inversion = inv;
    }
    result
}

fn train_loop(model: &mut Forecaster, data: &WindowedSplits, cfg: &TrainConfig) -> Result<TrainReport> {
    let sizes = model.param_sizes();
    let mut opt = OptimizerState::new(cfg.optimizer, &sizes);
    let mut r = rng::seeded(cfg.seed);
    let mut order: Vec<usize> = (0..data.train.len()).collect();

    let mut best_val = mean_window_mae(model, &data.val)?;
    let mut best = model.clone();
    let mut best_epoch = 0;
    let mut wait = 0;
    let mut curve = Vec::new();
    let mut steps = 0;
    let mut max_bound = model.max_block_bound();
    let mut certified = max_bound < 1.0 || model.transform.is_none();

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut r);
        // indexed by window so the epoch mean does not depend on the shuffle
        let mut losses = vec![0.0; data.train.len()];
        for batch in order.chunks(cfg.batch_size) {
            let mut acc: Vec<Vec<f64>> = sizes.iter().map(|&n| vec![0.0; n]).collect();
            for &i in batch {
                let (loss, g) = model
                    .loss_and_gradient(&data.train[i], cfg.loss_space)
                    .map_err(|e| training_error(e, epoch))?;
                losses[i] = loss;
                for (a, g) in acc.iter_mut().zip(&g) {
                    a.iter_mut().zip(g).for_each(|(a, g)| *a += g);
                }
            }
            let scale = 1.0 / batch.len() as f64;
            let norm = libm::sqrt(acc.iter().flatten().map(|g| g * g * scale * scale).sum());
            if !norm.is_finite() {
                return Err(Error::NonFinite("training gradient"));
            }
            let clip = if norm > cfg.grad_clip { cfg.grad_clip / norm } else { 1.0 };
            acc.iter_mut().flatten().for_each(|g| *g *= scale * clip);
            opt.step(model.param_slices_mut(), &acc, cfg.learning_rate);
            model.project();
            steps += 1;
            let bound = model.max_block_bound();
            max_bound = max_bound.max(bound);
            if model.transform.is_some() && bound >= 1.0 {
                certified = false;
            }
        }
        let train_mae = losses.iter().sum::<f64>() / data.train.len() as f64;
        let val_mae = mean_window_mae(model, &data.val).map_err(|e| training_error(e, epoch))?;
        curve.push(EpochRecord {
            epoch,
            train_mae,
            val_mae,
        });
        if val_mae < best_val {
            best_val = val_mae;
            best = model.clone();
            best_epoch = epoch;
            wait = 0;
        } else {
            wait += 1;
            if wait >= cfg.early_stop_patience {
                break;
            }
        }
    }
    *model = best;
    Ok(TrainReport {
        curve,
        best_epoch,
        steps,
        max_block_bound: max_bound,
        certified_every_step: certified,
    })
}

fn training_error(e: Error, epoch: usize) -> Error {
    match e {
        Error::BlockDivergence { block, report } => Error::Evaluation(alloc::format!(
            "inverse of block {block} diverged during epoch {epoch} after {} iterations (last step norms {:?})",
            report.iterations,
            &report.step_norms[report.step_norms.len().saturating_sub(3)..]
        )),
        other => other,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HorizonMetric {
    /// 1-based horizon step.
    pub step: usize,
    pub mae: f64,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub per_step: Vec<HorizonMetric>,
    /// Over every horizon step.
    pub overall: HorizonMetric,
}

impl EvalReport {
    pub fn at(&self, step: usize) -> Option<&HorizonMetric> {
        self.per_step.iter().find(|m| m.step == step)
    }
}

/// MAE and RMSE per requested horizon step, in the original units.
pub fn evaluate(
    model: &Forecaster,
    windows: &[Window],
    scaler: &FeatureScaler,
    steps: &[usize],
) -> Result<EvalReport> {
    if windows.is_empty() {
        return Err(invalid("cannot evaluate on an empty split"));
    }
    let horizon = model.backbone.spec().horizon;
    if let Some(&s) = steps.iter().find(|&&s| s == 0 || s > horizon) {
        return Err(invalid(alloc::format!("horizon step {s} outside 1..={horizon}")));
    }
    let mut abs = vec![0.0; horizon];
    let mut sq = vec![0.0; horizon];
    let mut count = 0usize;
    for w in windows {
        let pred = scaler.inverse_transform(&model.predict(&w.x)?)?;
        let truth = scaler.inverse_transform(&w.y)?;
        if pred.dims() != truth.dims() {
            return Err(shape_err("prediction vs target", truth.dims(), pred.dims()));
        }
        for h in 0..horizon {
            for (p, y) in pred.frame(h).iter().zip(truth.frame(h)) {
                let e = p - y;
                abs[h] += e.abs();
                sq[h] += e * e;
            }
        }
        count += w.y.n_nodes() * w.y.n_features();
    }
    let n = count as f64;
    let metric = |step: usize| HorizonMetric {
        step,
        mae: abs[step - 1] / n,
        rmse: libm::sqrt(sq[step - 1] / n),
    };
    let total = n * horizon as f64;
    Ok(EvalReport {
        per_step: steps.iter().map(|&s| metric(s)).collect(),
        overall: HorizonMetric {
            step: horizon,
            mae: abs.iter().sum::<f64>() / total,
            rmse: libm::sqrt(sq.iter().sum::<f64>() / total),
        },
    })
}

/// Short, human-readable label such as `rrn+per_node_linear`.
pub fn model_label(model: &Forecaster) -> String {
    let base = model.backbone.spec().kind.name();
    if model.transform.is_some() {
        alloc::format!("rrn+{base}")
    } else {
        String::from(base)
    }
}

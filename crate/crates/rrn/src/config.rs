//! Experiment configuration: JSON with a default for every field; unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use rrn_core::data::ShiftSpec;
use rrn_core::forecasting::{BackboneKind, BackboneSpec, LossSpace, Optimizer, TrainConfig};
use rrn_core::{Activation, BlockConfig, InversionConfig};

use crate::error::{io_err, Result, RrnError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Seed for single-run commands.
    pub seed: u64,
    /// Seeds for `train-eval`.
    pub seeds: Vec<u64>,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainSection,
    pub inversion: InversionSection,
    pub sensitivity: SensitivityConfig,
    pub roundtrip: RoundtripConfig,
    pub density: DensityConfig,
    pub gradcheck: GradcheckConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            seeds: vec![0, 1, 2, 3, 4],
            data: DataConfig::default(),
            model: ModelConfig::default(),
            train: TrainSection::default(),
            inversion: InversionSection::default(),
            sensitivity: SensitivityConfig::default(),
            roundtrip: RoundtripConfig::default(),
            density: DensityConfig::default(),
            gradcheck: GradcheckConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub n_nodes: usize,
    pub t_total: usize,
    pub n_features: usize,
    pub graph_density: f64,
    pub shift: ShiftConfig,
    /// Load values/distances CSVs instead of generating data.
    pub values_csv: Option<PathBuf>,
    pub distances_csv: Option<PathBuf>,
    /// Kernel parameters for CSV distances.
    pub bandwidth: f64,
    pub threshold: f64,
    pub lookback: usize,
    pub horizon: usize,
    pub report_steps: Vec<usize>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            n_nodes: 20,
            t_total: 4000,
            n_features: 1,
            graph_density: 0.3,
            shift: ShiftConfig::default(),
            values_csv: None,
            distances_csv: None,
            bandwidth: 1.0,
            threshold: 0.1,
            lookback: 12,
            horizon: 12,
            report_steps: vec![3, 6, 12],
        }
    }
}

/// Generator settings. Per-node offsets and scales default to evenly spaced
/// values over `offset_range` / `scale_range` unless listed explicitly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShiftConfig {
    pub temporal_drift: f64,
    pub regime_jump: f64,
    pub jump_index: Option<usize>,
    pub offset_range: [f64; 2],
    pub scale_range: [f64; 2],
    pub node_offsets: Option<Vec<f64>>,
    pub node_scales: Option<Vec<f64>>,
    pub noise_std: f64,
    pub seasonal_amplitude: f64,
    pub seasonal_period: f64,
    pub ar_coefficient: f64,
}

impl Default for ShiftConfig {
    fn default() -> Self {
        Self {
            temporal_drift: 0.002,
            regime_jump: 0.0,
            jump_index: None,
            offset_range: [-5.0, 5.0],
            scale_range: [0.5, 2.0],
            node_offsets: None,
            node_scales: None,
            noise_std: 1.0,
            seasonal_amplitude: 1.0,
            seasonal_period: 48.0,
            ar_coefficient: 0.7,
        }
    }
}

fn spaced(range: [f64; 2], n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![range[0]; n];
    }
    (0..n)
        .map(|i| range[0] + (range[1] - range[0]) * i as f64 / (n - 1) as f64)
        .collect()
}

impl ShiftConfig {
    pub fn to_spec(&self, n_nodes: usize) -> ShiftSpec {
        ShiftSpec {
            temporal_drift: self.temporal_drift,
            regime_jump: self.regime_jump,
            jump_index: self.jump_index,
            node_offsets: self.node_offsets.clone().unwrap_or_else(|| spaced(self.offset_range, n_nodes)),
            node_scales: self.node_scales.clone().unwrap_or_else(|| spaced(self.scale_range, n_nodes)),
            noise_std: self.noise_std,
            seasonal_amplitude: self.seasonal_amplitude,
            seasonal_period: self.seasonal_period,
            ar_coefficient: self.ar_coefficient,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub alpha: f64,
    pub contraction: f64,
    pub blocks: usize,
    pub hidden: usize,
    pub single_weight: bool,
    pub activation: String,
    pub backbone: String,
    pub backbone_hidden: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            alpha: 0.9,
            contraction: 0.9,
            blocks: 2,
            hidden: 32,
            single_weight: false,
            activation: "tanh".into(),
            backbone: "per_node_linear".into(),
            backbone_hidden: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub loss_space: String,
    pub optimizer: String,
    pub grad_clip: f64,
    /// Inversion tolerance while training; evaluation uses `inversion.tol`.
    pub inversion_tol: Option<f64>,
    /// Also train the plain backbone (the `--ablate` flag sets this).
    pub ablate: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            learning_rate: 5e-3,
            batch_size: 64,
            max_epochs: 100,
            patience: 10,
            loss_space: "original".into(),
            optimizer: "sgd".into(),
            grad_clip: 5.0,
            inversion_tol: Some(1e-4),
            ablate: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InversionSection {
    pub max_iters: usize,
    pub tol: f64,
    pub unroll_for_gradient: bool,
}

impl Default for InversionSection {
    fn default() -> Self {
        let d = InversionConfig::default();
        Self {
            max_iters: d.max_iters,
            tol: d.tol,
            unroll_for_gradient: d.unroll_for_gradient,
        }
    }
}

/// How a reversibility probe sets block weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    /// The regular random initialization.
    Init,
    /// Random directions rescaled onto the weight budget.
    Saturated,
    /// Aligned rank-one weights on the budget (attains the Lipschitz bound).
    RankOne,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensitivityConfig {
    pub values: Vec<f64>,
    pub iterations: Vec<usize>,
    /// `[T, N, D]` of the random round-trip input.
    pub input_dims: [usize; 3],
    pub weights: WeightMode,
    pub train_epochs: usize,
    pub t_total: usize,
}

impl Default for SensitivityConfig {
    fn default() -> Self {
        Self {
            values: vec![0.8, 0.9, 1.0, 5.0, 10.0, 15.0],
            iterations: vec![5, 10, 20, 50],
            input_dims: [12, 20, 4],
            weights: WeightMode::RankOne,
            train_epochs: 1,
            t_total: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoundtripConfig {
    pub input_dims: [usize; 3],
    pub iterations: Vec<usize>,
    pub weights: WeightMode,
    /// Largest acceptable error at the final grid entry.
    pub max_error: f64,
}

impl Default for RoundtripConfig {
    fn default() -> Self {
        Self {
            input_dims: [12, 20, 4],
            iterations: vec![5, 10, 20, 50],
            weights: WeightMode::Init,
            max_error: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DensityConfig {
    pub bins: usize,
    /// Use a saved forecaster instead of training one.
    pub checkpoint: Option<PathBuf>,
    pub train_epochs: usize,
}

impl Default for DensityConfig {
    fn default() -> Self {
        Self {
            bins: 50,
            checkpoint: None,
            train_epochs: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckConfig {
    pub eps: f64,
    pub tolerance: f64,
    pub unroll_iters: usize,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            eps: 1e-5,
            tolerance: 1e-3,
            unroll_iters: 10,
        }
    }
}

fn named<T>(what: &str, value: &str, parse: impl Fn(&str) -> Option<T>) -> Result<T> {
    parse(value).ok_or_else(|| RrnError::Config(format!("unknown {what} {value:?}")))
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| RrnError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.activation()?;
        self.backbone_kind()?;
        self.loss_space()?;
        self.optimizer()?;
        if self.model.blocks == 0 {
            return Err(RrnError::Config("model.blocks must be at least 1".into()));
        }
        if self.model.hidden == 0 && !self.model.single_weight {
            return Err(RrnError::Config("model.hidden must be positive".into()));
        }
        if self.seeds.is_empty() {
            return Err(RrnError::Config("seeds must not be empty".into()));
        }
        if self.data.values_csv.is_some() != self.data.distances_csv.is_some() {
            return Err(RrnError::Config("values_csv and distances_csv go together".into()));
        }
        if self.density.bins == 0 {
            return Err(RrnError::Config("density.bins must be positive".into()));
        }
        self.train_config(0).validate()?;
        self.inversion_config().validate()?;
        Ok(())
    }

    pub fn activation(&self) -> Result<Activation> {
        named("activation", &self.model.activation, Activation::from_name)
    }

    pub fn backbone_kind(&self) -> Result<BackboneKind> {
        named("backbone", &self.model.backbone, BackboneKind::from_name)
    }

    pub fn loss_space(&self) -> Result<LossSpace> {
        named("loss space", &self.train.loss_space, LossSpace::from_name)
    }

    pub fn optimizer(&self) -> Result<Optimizer> {
        named("optimizer", &self.train.optimizer, Optimizer::from_name)
    }

    pub fn block_config(&self) -> BlockConfig {
        BlockConfig {
            alpha: self.model.alpha,
            contraction_target: self.model.contraction,
            activation: self.activation().unwrap_or(Activation::Tanh),
            hidden: (!self.model.single_weight).then_some(self.model.hidden),
        }
    }

    pub fn inversion_config(&self) -> InversionConfig {
        InversionConfig {
            max_iters: self.inversion.max_iters,
            tol: self.inversion.tol,
            unroll_for_gradient: self.inversion.unroll_for_gradient,
        }
    }

    pub fn backbone_spec(&self) -> BackboneSpec {
        BackboneSpec {
            kind: self.backbone_kind().unwrap_or(BackboneKind::PerNodeLinear),
            lookback: self.data.lookback,
            horizon: self.data.horizon,
            hidden: self.model.backbone_hidden,
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.train.learning_rate,
            batch_size: self.train.batch_size,
            max_epochs: self.train.max_epochs,
            early_stop_patience: self.train.patience,
            seed,
            loss_space: self.loss_space().unwrap_or_default(),
            optimizer: self.optimizer().unwrap_or(Optimizer::Sgd),
            grad_clip: self.train.grad_clip,
            require_certified: true,
            inversion_tol: self.train.inversion_tol,
        }
    }
}

/// Command-line overrides applied on top of a file or the defaults.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub alpha: Option<f64>,
    pub contraction: Option<f64>,
    pub blocks: Option<usize>,
    pub iters: Option<usize>,
    pub ablate: bool,
    pub single_weight: bool,
    pub loss_space: Option<String>,
}

impl Overrides {
    /// `seed` also replaces the seed list.
    pub fn apply(&self, cfg: &mut ExperimentConfig) -> Result<()> {
        if let Some(s) = self.seed {
            cfg.seed = s;
            cfg.seeds = vec![s];
        }
        if let Some(a) = self.alpha {
            cfg.model.alpha = a;
        }
        if let Some(c) = self.contraction {
            cfg.model.contraction = c;
        }
        if let Some(b) = self.blocks {
            cfg.model.blocks = b;
        }
        if let Some(i) = self.iters {
            cfg.inversion.max_iters = i;
        }
        if self.ablate {
            cfg.train.ablate = true;
        }
        if self.single_weight {
            cfg.model.single_weight = true;
        }
        if let Some(l) = &self.loss_space {
            cfg.train.loss_space = l.clone();
        }
        cfg.validate()
    }
}

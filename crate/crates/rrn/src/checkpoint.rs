//! JSON checkpoints for blocks, transforms and forecasters.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use rrn_core::forecasting::{Backbone, BackboneKind, BackboneParams, BackboneSpec, Forecaster};
use rrn_core::{
    Activation, BlockWeights, CenterNormParams, InversionConfig, Matrix, ResidualBlock, RrnTransform,
    SpatialGraph,
};

use crate::error::{io_err, Result, RrnError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixJson {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl MatrixJson {
    fn from_matrix(m: &Matrix) -> Self {
        Self {
            rows: m.rows(),
            cols: m.cols(),
            data: m.as_slice().to_vec(),
        }
    }

    fn to_matrix(&self) -> Result<Matrix> {
        Ok(Matrix::new(self.rows, self.cols, self.data.clone())?)
    }
}

/// Node count plus SHA-256 of the adjacency's little-endian `f64` bytes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphFingerprint {
    pub n_nodes: usize,
    pub adjacency_sha256: String,
}

impl GraphFingerprint {
    pub fn of(g: &SpatialGraph) -> Self {
        let mut h = Sha256::new();
        for v in g.adjacency().as_slice() {
            h.update(v.to_le_bytes());
        }
        let adjacency_sha256 = h.finalize().iter().map(|b| format!("{b:02x}")).collect();
        Self {
            n_nodes: g.n_nodes(),
            adjacency_sha256,
        }
    }

    fn check(&self, g: &SpatialGraph) -> Result<()> {
        let actual = Self::of(g);
        if &actual != self {
            return Err(RrnError::GraphMismatch(format!(
                "checkpoint expects {} nodes / {}, graph has {} nodes / {}",
                self.n_nodes, self.adjacency_sha256, actual.n_nodes, actual.adjacency_sha256
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockCheckpoint {
    pub alpha: f64,
    pub gamma: MatrixJson,
    pub beta: MatrixJson,
    /// `[W₁, W₂]` in hidden mode, `[W]` otherwise.
    pub weights: Vec<MatrixJson>,
    pub activation: String,
    pub contraction_target: f64,
    pub hidden: Option<usize>,
}

impl BlockCheckpoint {
    pub fn from_block(b: &ResidualBlock) -> Self {
        Self {
            alpha: b.cn.alpha(),
            gamma: MatrixJson::from_matrix(&b.cn.gamma),
            beta: MatrixJson::from_matrix(&b.cn.beta),
            weights: b.weights.matrices().into_iter().map(MatrixJson::from_matrix).collect(),
            activation: b.activation.name().to_string(),
            contraction_target: b.contraction_target(),
            hidden: b.weights.hidden(),
        }
    }

    pub fn to_block(&self, graph: &SpatialGraph) -> Result<ResidualBlock> {
        let activation = Activation::from_name(&self.activation)
            .ok_or_else(|| RrnError::Config(format!("unknown activation {:?}", self.activation)))?;
        let cn = CenterNormParams::new(self.alpha, self.gamma.to_matrix()?, self.beta.to_matrix()?)?;
        let mut mats = self
            .weights
            .iter()
            .map(MatrixJson::to_matrix)
            .collect::<Result<Vec<_>>>()?;
        let weights = match (mats.len(), self.hidden) {
            (2, Some(_)) => {
                let output = mats.pop().unwrap();
                let input = mats.pop().unwrap();
                BlockWeights::Hidden { input, output }
            }
            (1, None) => BlockWeights::Single(mats.pop().unwrap()),
            (k, h) => {
                return Err(RrnError::Config(format!(
                    "block checkpoint has {k} weight matrices but hidden = {h:?}"
                )))
            }
        };
        if weights.hidden() != self.hidden {
            return Err(RrnError::Config("block hidden width disagrees with its weights".into()));
        }
        Ok(ResidualBlock::from_parts(graph, cn, weights, activation, self.contraction_target)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InversionJson {
    pub max_iters: usize,
    pub tol: f64,
    pub unroll_for_gradient: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformCheckpoint {
    pub graph: GraphFingerprint,
    pub inversion: InversionJson,
    pub blocks: Vec<BlockCheckpoint>,
}

impl TransformCheckpoint {
    pub fn from_transform(t: &RrnTransform) -> Self {
        Self {
            graph: GraphFingerprint::of(t.graph()),
            inversion: InversionJson {
                max_iters: t.inversion.max_iters,
                tol: t.inversion.tol,
                unroll_for_gradient: t.inversion.unroll_for_gradient,
            },
            blocks: t.blocks().iter().map(BlockCheckpoint::from_block).collect(),
        }
    }

    /// Rebuilds the transform on `graph`, which must match the stored fingerprint.
    pub fn to_transform(&self, graph: &SpatialGraph) -> Result<RrnTransform> {
        self.graph.check(graph)?;
        let blocks = self
            .blocks
            .iter()
            .map(|b| b.to_block(graph))
            .collect::<Result<Vec<_>>>()?;
        let inversion = InversionConfig {
            max_iters: self.inversion.max_iters,
            tol: self.inversion.tol,
            unroll_for_gradient: self.inversion.unroll_for_gradient,
        };
        Ok(RrnTransform::from_blocks(graph, blocks, inversion)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackboneCheckpoint {
    pub kind: String,
    pub lookback: usize,
    pub horizon: usize,
    pub hidden: usize,
    /// `per_node_linear`: `[M, bias]`; `graph_mlp`: `[W_in, b_in, W_out, b_out]`.
    /// Biases are stored as single-column matrices.
    pub params: Vec<MatrixJson>,
}

impl BackboneCheckpoint {
    pub fn from_backbone(b: &Backbone) -> Self {
        let col = |v: &[f64]| MatrixJson {
            rows: v.len(),
            cols: 1,
            data: v.to_vec(),
        };
        let params = match &b.params {
            BackboneParams::PerNodeLinear { m, bias } => vec![MatrixJson::from_matrix(m), col(bias)],
            BackboneParams::GraphMlp { w_in, b_in, w_out, b_out } => vec![
                MatrixJson::from_matrix(w_in),
                col(b_in),
                MatrixJson::from_matrix(w_out),
                col(b_out),
            ],
        };
        let spec = b.spec();
        Self {
            kind: spec.kind.name().to_string(),
            lookback: spec.lookback,
            horizon: spec.horizon,
            hidden: spec.hidden,
            params,
        }
    }

    pub fn to_backbone(&self, graph: &SpatialGraph) -> Result<Backbone> {
        let kind = BackboneKind::from_name(&self.kind)
            .ok_or_else(|| RrnError::Config(format!("unknown backbone kind {:?}", self.kind)))?;
        let spec = BackboneSpec {
            kind,
            lookback: self.lookback,
            horizon: self.horizon,
            hidden: self.hidden,
        };
        let bad = || RrnError::Config("backbone checkpoint has the wrong parameter list".into());
        let params = match (kind, self.params.as_slice()) {
            (BackboneKind::PerNodeLinear, [m, b]) => BackboneParams::PerNodeLinear {
                m: m.to_matrix()?,
                bias: b.data.clone(),
            },
            (BackboneKind::GraphMlp, [wi, bi, wo, bo]) => BackboneParams::GraphMlp {
                w_in: wi.to_matrix()?,
                b_in: bi.data.clone(),
                w_out: wo.to_matrix()?,
                b_out: bo.data.clone(),
            },
            _ => return Err(bad()),
        };
        Ok(Backbone::from_params(spec, graph, params)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForecasterCheckpoint {
    pub graph: GraphFingerprint,
    pub transform: Option<TransformCheckpoint>,
    pub backbone: BackboneCheckpoint,
}

impl ForecasterCheckpoint {
    pub fn from_forecaster(f: &Forecaster) -> Self {
        Self {
            graph: GraphFingerprint::of(f.backbone.graph()),
            transform: f.transform.as_ref().map(TransformCheckpoint::from_transform),
            backbone: BackboneCheckpoint::from_backbone(&f.backbone),
        }
    }

    pub fn to_forecaster(&self, graph: &SpatialGraph) -> Result<Forecaster> {
        self.graph.check(graph)?;
        let transform = self.transform.as_ref().map(|t| t.to_transform(graph)).transpose()?;
        Ok(Forecaster::new(transform, self.backbone.to_backbone(graph)?)?)
    }
}

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let mut text = serde_json::to_string_pretty(value).map_err(|source| RrnError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    std::fs::write(path, text).map_err(io_err(path))
}

pub fn load_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| RrnError::Json {
        path: path.to_path_buf(),
        source,
    })
}

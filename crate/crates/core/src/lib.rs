//! Reversible residual normalization for spatio-temporal graph forecasting.
//!
//! Non-stationary windows `[T × N × D]` are pushed through a stack of
//! invertible residual blocks `x + σ(Â · CN(x) · W)` whose residual branch is
//! kept contractive by construction. A forecasting backbone runs in the
//! resulting latent space and its predictions are mapped back by fixed-point
//! inversion of each block.
//!
//! This crate is `no_std` + `alloc`; file formats, experiments and the CLI
//! live in the `rrn` crate.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod block;
pub mod data;
pub mod error;
pub mod forecasting;
pub mod graph;
pub mod normalization;
pub mod numerics;
pub mod transform;

pub use error::{DivergenceReport, Error, Result};
pub use block::{
    block_forward, block_inverse, block_lipschitz_bound, BlockConfig, BlockWeights, InversionConfig,
    ResidualBlock,
};
pub use data::{generate_synthetic, make_windows, SeriesDataset, ShiftSpec};
pub use forecasting::{
    backbone_predict, evaluate, train, Backbone, BackboneKind, BackboneSpec, EvalReport, Forecaster,
    LossSpace, TrainConfig,
};
pub use graph::SpatialGraph;
pub use normalization::{center_norm, center_norm_lipschitz, CenterNormParams};
pub use numerics::{Activation, GradientTape, Matrix, Tensor3};
pub use transform::{roundtrip_report, transform_forward, transform_inverse, RrnTransform};

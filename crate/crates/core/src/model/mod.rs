//! PointNet-style per-point segmentation network.
//!
//! Pipeline: optional 3×3 T-Net on XYZ, shared per-point MLP (local
//! feature), second per-point MLP, max-pool over points (global feature),
//! global feature concatenated onto every local feature, segmentation head.
//! No batch normalization: every layer is affine followed by ReLU, so an
//! inner-loop update is a plain gradient step.

mod checkpoint;
mod config;
mod pointnet;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, peek_checkpoint, read_header, save_checkpoint,
    CheckpointHeader, TensorEntry, FORMAT_VERSION,
};
pub use config::{LayerShape, PointNetConfig};
pub use pointnet::{
    forward, init_params, predict_labels, predict_logits, tnet_transform, ForwardVars, ModelParams,
};

use thiserror::Error;

use crate::tensor::{Precision, TensorError};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("block has {actual} feature columns, the network expects {expected}")]
    InputWidth { expected: usize, actual: usize },
    #[error("block has no points")]
    EmptyBlock,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint holds {stored} parameters, {requested} requested")]
    Precision { stored: Precision, requested: Precision },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

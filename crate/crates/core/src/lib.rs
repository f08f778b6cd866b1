//! Few-shot meta-learning for point-cloud semantic segmentation.
//!
//! The crate is organized bottom-up:
//!
//! - [`tensor`]: dense tensors, a reverse-mode tape, finite-difference checks
//! - [`model`]: a compact PointNet-style per-point classifier and checkpoints
//! - [`data`]: room ingestion, 1m×1m blocks, 9-dim features, synthetic areas, PLY
//! - [`sampler`]: N-way K-shot episode construction and task distributions
//! - [`meta`]: inner-loop adaptation, meta gradients, pretraining and transfer
//! - [`metrics`]: confusion matrices with oAcc / mAcc / mIoU
//! - [`config`]: TOML run configuration
//! - [`gradcheck`]: finite-difference check of the network gradients

pub mod config;
pub mod data;
pub mod gradcheck;
pub mod meta;
pub mod metrics;
pub mod model;
pub mod sampler;
pub mod seed;
pub mod tensor;

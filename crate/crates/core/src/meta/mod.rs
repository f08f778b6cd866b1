//! MAML over a [`MetaLearner`]: inner adaptation, adapted query losses,
//! first- and second-order meta gradients, the outer loop and transfer
//! evaluation.
//!
//! For a task with support set S and query set Q, adaptation takes
//! `φ ← φ - β ∇L_S(φ)` starting from `φ = θ`, and the meta gradient is the
//! gradient of `L_Q(φ′)` with respect to θ. The outer step is plain
//! gradient descent, `θ ← θ - α g`.

mod config;
mod learner;
mod maml;
mod train;

pub use config::{BetaPolicy, GradientMode, MetaConfig, Schedule};
pub use learner::{value_and_grad, MetaLearner, PointNetLearner, QuadraticLearner, QuadraticTask};
pub use maml::{
    collaborative_query_loss, inner_adapt, meta_gradient, meta_step, query_loss, task_meta_gradient, TrainState,
};
pub use train::{
    adapt_and_eval, pretrain, EpisodeSource, EvalConfig, EvalSummary, LossCurve, StepRecord, TrainObserver,
    DIVERGENCE_FACTOR,
};

use thiserror::Error;

use crate::metrics::MetricsError;
use crate::model::ModelError;
use crate::sampler::SamplerError;
use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum MetaError {
    #[error("invalid meta configuration: {0}")]
    Config(String),
    #[error("empty task batch")]
    EmptyBatch,
    #[error("second-order gradients unavailable: {0}")]
    Unsupported(String),
    #[error("training diverged at step {step} (query loss {loss})")]
    Divergence { step: usize, loss: f64 },
    #[error("{0}")]
    Observer(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

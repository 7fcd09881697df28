//! Dense-tensor graph network predicting credulous acceptance of assumptions.

mod checkpoint;
mod config;
mod input;
pub mod layers;
mod loss;
mod model;
mod optim;
mod scalar;
mod train;

use thiserror::Error;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use config::{AttentionScore, Kernel, ModelConfig, MODEL_KEYS};
pub use input::{GraphInput, RelationEdges};
pub use layers::{gat_layer, gcn_layer};
pub use loss::{class_weights, loss_gradient, weighted_bce, ClassWeights, PROB_EPS};
pub use model::{
    sigmoid, BlockParams, Dropout, ForwardOutput, ForwardTrace, KernelParams, Linear, Model, Params, Prediction,
};
pub use optim::Adam;
pub use scalar::Scalar;
pub use train::{batch_gradient, evaluate, train, tune_threshold, EpochRecord, Sample, TrainReport};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error("graph has {nodes} nodes, model supports at most {max}")]
    TooManyNodes { nodes: usize, max: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("no validation data")]
    NoValidationData,
    #[error("non-finite values in {0}")]
    NonFinite(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

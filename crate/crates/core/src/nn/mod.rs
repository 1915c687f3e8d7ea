//! Compact convolutional scalar regressor.
//!
//! Each stage is a 3x3 convolution (padding 1, configurable stride) followed
//! by ReLU; the head is global average pooling and an affine map to a single
//! unbounded score. Everything is `f64` so finite-difference checks are tight.

mod checkpoint;
mod loss;
mod network;

use thiserror::Error;

pub use checkpoint::{CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use loss::{class_weights, loss_and_grad, LossConfig, LossKind};
pub use network::{ConvStage, ForwardCache, Layout, NetworkSpec, NetworkState, SampleCache};

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("cache was produced by parameter version {cache}, network is at {current}")]
    StaleCache { cache: u64, current: u64 },
    #[error("empty batch")]
    EmptyBatch,
    #[error("{scores} scores but {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("all class counts are zero")]
    NoClasses,
    #[error("class weights must be finite and nonnegative: {0:?}")]
    InvalidWeights([f64; 3]),
    #[error("label {0} is not a SLoF class")]
    InvalidLabel(u8),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

//! Policy/value residual network written against a small set of
//! hand-derived layer kernels (convolution, batch norm, dense, leaky ReLU),
//! with exact gradients, SGD with momentum and a binary checkpoint format.
//!
//! Activations use a pixels-by-channels layout: a batch of `B` feature maps
//! with `C` channels is a row-major `[B * 49, C]` matrix, so convolutions
//! reduce to one matrix product over an im2col buffer.

mod checkpoint;
mod layers;
mod network;
mod optim;
mod scalar;
mod tensor;


pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CheckpointContents,
};
pub use layers::{leaky_relu, masked_softmax};
pub use network::{
    Batch, BnStats, ConvBnParams, DenseParams, ForwardCache, LossBreakdown, Mode, NetOutput,
    Network, NetworkConfig, Params, BODY_KERNEL,
};
pub use optim::Sgd;
pub use scalar::Scalar;
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("unsupported checkpoint version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("invalid network config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

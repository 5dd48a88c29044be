//! Dense tensors, the forward/backward pairs the encoder needs, and Adam.
//!
//! There is no recorded graph. Each forward op returns what its backward
//! counterpart needs, and the model runs the backward functions in a fixed
//! reverse order.

mod adam;
mod checkpoint;
mod ops;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{
    read_checkpoint, stored_precision, write_checkpoint, Checkpoint, CHECKPOINT_VERSION,
};
pub use ops::{
    affine, affine_backward, concat, concat_backward, conv1d_same, conv1d_same_backward,
    conv1d_same_masked, dropout, dropout_backward, piecewise_max_pool, piecewise_max_pool_backward,
    softmax, softmax_cross_entropy, tanh_activation, tanh_backward, AffineGrads, Conv1dGrads,
    DropoutMask, Mode, PoolArgmax,
};
pub use tensor::{Scalar, Tensor};

use thiserror::Error;

#[derive(Clone, Debug, PartialEq, Error)]
pub enum TensorError {
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("{op}: {message}")]
    Invalid { op: &'static str, message: String },
    #[error("{op}: non-finite value")]
    NonFinite { op: &'static str },
    #[error("parameter `{0}` has no gradient")]
    MissingGrad(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for TensorError {
    fn from(e: std::io::Error) -> Self {
        TensorError::Io(e.to_string())
    }
}

//! Layers of the descriptor network.

mod batchnorm;
mod conv;
mod dropout;
mod init;
mod normalize;

pub use batchnorm::{batch_norm, BatchNormLayer, BatchStats};
pub use conv::{conv2d, conv_output_size, ConvLayer};
pub use dropout::{dropout, DropoutLayer};
pub use init::orthogonal_init;
pub use normalize::{l2_normalize, L2_EPS};

/// Whether a forward pass updates batch statistics and applies dropout.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerMode {
    Training,
    Inference,
}

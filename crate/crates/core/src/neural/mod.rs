//! Minimal tensor layer set with exact backpropagation.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
pub mod loss;
pub mod ops;
pub mod tensor;

pub use adam::Adam;
pub use checkpoint::{ArchTag, Checkpoint, NamedTensor};
pub use gradcheck::finite_diff_gradcheck;
pub use layers::{
    relu, softmax, BatchNorm, Buffer, Context, Conv2d, ConvTranspose2d, Dense, Dropout,
    GlobalMaxPool, Layer, MaxPool2x2, Mode, Param, Relu, Reshape, Sequential, Softmax,
};
pub use loss::{add_l2_gradient, kl_divergence_loss, l2_penalty, mse_loss, LossConfig, LossValue};
pub use ops::{conv2d, conv2d_backward, conv2d_stride2, transposed_conv2d};
pub use tensor::{Scalar, Tensor};

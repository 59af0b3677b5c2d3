//! Dense tensors and the layers of the selector network.
//!
//! Layers are plain structs with explicit `forward`/`backward` methods; the
//! caller owns the activations needed for the backward pass. Parameter
//! gradients accumulate into [`LayerParams`] until [`LayerParams::zero_grad`].

mod adam;
mod gemm;
mod gradcheck;
mod layers;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use gradcheck::{check_gradients, relative_error, GradReport};
pub use layers::{
    maxpool2x2, maxpool2x2_backward, relu, relu_backward, softmax, softmax_cross_entropy, Conv2d,
    Dropout, LayerParams, Linear, PoolIndices,
};
pub use tensor::Tensor;

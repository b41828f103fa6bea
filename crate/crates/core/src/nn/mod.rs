//! Tensor primitives, layer math, the convolutional predictor, and its
//! checkpoint format.

pub mod checkpoint;
pub mod layers;
mod model;
mod tensor;

pub use model::{
    backward, decode_output, forward, forward_traced, raster_to_tensor, ForwardTrace, ModeSet,
    ModelParams, NetConfig, ParamBlock,
};
pub use tensor::Tensor;

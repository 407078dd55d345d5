//! Tensors, a reverse-mode tape and the differentiable operators built on it.

pub mod adam;
pub mod block;
pub mod checkpoint;
pub mod conv2d;
mod dense;
pub mod face_conv;
pub mod gradcheck;
mod ops;
pub mod params;
mod pool;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use block::{face_resnet_block, FaceResBlockParams, FaceResBlockVars, LEAKY_SLOPE};
pub use checkpoint::Checkpoint;
pub use face_conv::{face_conv, FaceConvParams, FaceConvShape};
pub use gradcheck::{gradcheck, random_inputs, relative_error, GradcheckReport};
pub use ops::{leaky_relu_scalar, sigmoid_scalar, softplus_scalar};
pub use params::{accumulate_grads, Adam, Binder, ParamStore, Params};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

//! Minimal differentiable tensor engine and transformer encoder.

pub mod checkpoint;
mod encoder;
mod graph;
mod optim;
mod params;
mod tensor;

pub use encoder::{Encoder, EncoderConfig, Linear};
pub use graph::{sigmoid, Gradients, Graph, Var, BCE_CLAMP};
pub use optim::Adam;
pub use params::{Init, Param, ParamId, ParamStore};
pub use tensor::Tensor;

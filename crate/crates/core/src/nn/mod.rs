//! Minimal differentiable-layer engine: dense tensors, layer kernels with
//! hand-written backward passes, losses, optimizers, and gradient checking.

pub mod checkpoint;
pub mod data;
pub mod gradcheck;
pub mod init;
pub mod loss;
pub mod model;
pub mod ops;
pub mod optim;
pub mod tensor;

pub use checkpoint::ModelCheckpoint;
pub use model::{Gradients, Layer, LayerSpec, Sequential, Tape};
pub use ops::Padding;
pub use optim::{Adam, AdamConfig, NesterovConfig, Optimizer, SgdNesterov};
pub use tensor::{Scalar, Tensor};

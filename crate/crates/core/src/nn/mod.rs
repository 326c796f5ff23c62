//! Minimal CPU neural-network engine: tensors, a differentiation tape,
//! layers, parameter sets, checkpoints and the Adam optimizer.

pub mod checkpoint;
pub mod graph;
pub mod layers;
pub mod optim;
pub mod params;
pub mod tensor;

pub use graph::{Gradients, Graph, Var};
pub use layers::{Conv, Dense, Mode};
pub use optim::{Adam, AdamConfig};
pub use params::{he_conv, he_dense, ParamId, ParamSet, ParamSpec};
pub use tensor::{matmul, MatRef, Scalar, Tensor};

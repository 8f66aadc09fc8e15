//! Tensor math, seeded randomness, reverse-mode gradients and SGD.

mod dropout;
mod graph;
mod optim;
pub mod par;
mod params;
mod rng;
mod tensor;

pub use dropout::{dropout, dropout_mask};
pub use graph::{value_and_grad, Gradients, Graph, Var};
pub use optim::sgd_step;
pub use params::{Param, ParamGrads, ParamSet};
pub use rng::SeededRng;
pub use tensor::Tensor;

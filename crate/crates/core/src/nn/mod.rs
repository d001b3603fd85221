//! Masked multilayer perceptron, backpropagation and momentum SGD.

pub mod checkpoint;
mod layer;
mod loss;
mod network;
mod optim;

pub use layer::SparseLayer;
pub use loss::{argmax_rows, loss_and_grad};
pub use network::{Cache, GradMode, Gradients, LayerGrad, Network};
pub use optim::{lr_schedule, sgd_step, sgd_step_network, LrSchedule, OptimizerState};

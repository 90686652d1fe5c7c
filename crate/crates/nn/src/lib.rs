//! Minimal neural-network toolkit: dense matrices, a reverse-mode autodiff
//! tape, LSTM and attention layers, and first-order optimizers.
//!
//! Everything runs in `f64` on the CPU and is deterministic for a fixed
//! random seed.

pub mod graph;
pub mod layers;
pub mod matrix;
pub mod optim;
pub mod params;

pub use graph::{sigmoid, softplus, Graph, Var};
pub use layers::{AdditiveAttention, BiLstm, BiLstmOutput, LayerStates, Linear, Lstm, LstmCell};
pub use matrix::Matrix;
pub use optim::{Adam, LrSchedule, Optimizer, Sgd};
pub use params::{Grads, Param, ParamId, ParamStore};

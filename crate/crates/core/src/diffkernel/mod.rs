//! Minimal deterministic differentiable-computation kernel.

mod cells;
mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use cells::{gru_cell, lstm_step, GruParams, Linear, LstmParams};
pub use gradcheck::{grad_check, GRAD_CHECK_FLOOR};
pub use params::{Gradients, ParamId, ParamStore, Parameter, TensorRecord, INIT_SCALE};
pub use tape::{sigmoid, Activation, Tape, Var};
pub use tensor::Tensor;

//! Minimal reverse-mode autodiff: dense `f64` tensors, a tape of the
//! operations the model needs, LSTM/affine layers and a finite-difference
//! gradient checker.

mod gradcheck;
mod graph;
mod nn;
mod tensor;

pub use gradcheck::{grad_check, GradCheckReport};
pub use graph::{dropout_apply, max_over_time, scaled_softmax_rows, sigmoid, softmax, Graph, Var};
pub use nn::{
    init_weight, lstm_sequence, lstm_step, BiLstm, Bound, Dense, LstmParams, LstmVars, ParamId, ParamStore, GATES,
};
pub use tensor::{matmul, Tensor};

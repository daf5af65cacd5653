//! ASIM: an attention-based sentence-pair interaction model for predicting
//! how two Stack Overflow knowledge units relate (duplicate, direct,
//! indirect, isolated), built on a small self-contained autodiff engine.

pub mod autodiff;
pub mod embeddings;
pub mod error;
pub mod eval;
pub mod model;
pub mod synth;
pub mod task;
pub mod text;
pub mod train;

pub use error::{Error, Result};
pub use task::Task;

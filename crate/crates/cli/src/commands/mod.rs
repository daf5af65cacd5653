mod data;
mod embed;
mod score;
mod train;

pub use data::{preprocess, synth, PreprocessSummary};
pub use embed::{embed, neighbours, read_cooccurrence, read_corpus, read_vectors, write_cooccurrence};
pub use score::{eval, export_attention, predict, EvalFile, Prediction};
pub use train::{ablation, train, TrainSummary};

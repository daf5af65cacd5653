//! Vocabularies, GloVe-format tables and desk-scale GloVe training.

pub mod glove;
pub mod table;
pub mod vocab;

pub use glove::{count_cooccurrence, train_glove, CooccurrenceCounts, GloveConfig, GloveModel, GloveOutcome};
pub use table::{load_embeddings, oov_vector, save_embeddings, EmbeddingTable, LoadedEmbeddings};
pub use vocab::{Vocabulary, OOV, OOV_TOKEN, PAD, PAD_TOKEN};

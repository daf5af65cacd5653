//! Cleaning, tokenization and dataset parsing.

pub mod clean;
pub mod dataset;
pub mod porter;
pub mod stopwords;
pub mod unit;

pub use clean::{clean_text, split_camel_case, tokenize, NUMBER_TOKEN, URL_TOKEN};
pub use dataset::{
    escape_field, label_histogram, parse_askubuntu, parse_dataset, parse_ku_dataset, split_records, unescape_field,
    write_dataset, QuestionText, RawRecord,
};
pub use porter::stem;
pub use stopwords::{is_stop_word, STOP_WORDS};
pub use unit::{
    assemble_ku, to_examples, tokenize_records, unit_tokens, vocab_from_pairs, Example, KnowledgeUnit, TokenizedPair,
    MAX_LEN,
};

use serde::{Deserialize, Serialize};

use super::clean::{clean_text, tokenize};
use super::dataset::{QuestionText, RawRecord};
use crate::embeddings::Vocabulary;
use crate::error::{Error, Result};
use crate::task::Task;

/// Cap on tokens per knowledge unit.
pub const MAX_LEN: usize = 250;

/// A preprocessed question-plus-answers sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeUnit {
    pub token_ids: Vec<usize>,
    pub tokens: Vec<String>,
    /// Start offsets of the title, body and answers parts in `tokens`.
    pub source_parts: [usize; 3],
}

impl KnowledgeUnit {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    /// Maps already-tokenized text through `vocab`.
    pub fn from_tokens(tokens: Vec<String>, source_parts: [usize; 3], vocab: &Vocabulary) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::EmptyUnit { context: String::new() });
        }
        let token_ids = tokens.iter().map(|t| vocab.id(t)).collect();
        Ok(KnowledgeUnit {
            token_ids,
            tokens,
            source_parts,
        })
    }
}

fn part_tokens(text: &str) -> Vec<String> {
    if text.trim().eq_ignore_ascii_case("null") {
        return Vec::new();
    }
    tokenize(&clean_text(text, true))
}

/// Tokens of title, body and answers, concatenated and cut to `max_len`
/// (the head is kept). Returns the tokens and part offsets.
pub fn unit_tokens(title: &str, body: &str, answers: &str, max_len: usize) -> Result<(Vec<String>, [usize; 3])> {
    let mut tokens = Vec::new();
    let mut parts = [0; 3];
    for (slot, text) in [title, body, answers].into_iter().enumerate() {
        parts[slot] = tokens.len().min(max_len);
        tokens.extend(part_tokens(text));
    }
    tokens.truncate(max_len);
    if tokens.is_empty() {
        return Err(Error::EmptyUnit { context: String::new() });
    }
    Ok((tokens, parts))
}

pub fn assemble_ku(title: &str, body: &str, answers: &str, vocab: &Vocabulary, max_len: usize) -> Result<KnowledgeUnit> {
    let (tokens, parts) = unit_tokens(title, body, answers, max_len)?;
    KnowledgeUnit::from_tokens(tokens, parts, vocab)
}

/// Token form of one record, as stored in the preprocessing cache.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedPair {
    pub pair_id: String,
    pub x_tokens: Vec<String>,
    pub x_parts: [usize; 3],
    pub y_tokens: Vec<String>,
    pub y_parts: [usize; 3],
    pub label: usize,
    pub task: Task,
}

fn side_tokens(q: &QuestionText, max_len: usize, pair_id: &str, side: &str) -> Result<(Vec<String>, [usize; 3])> {
    unit_tokens(&q.title, &q.body, &q.answers, max_len).map_err(|e| e.with_context(format!("pair {pair_id}, side {side}")))
}

impl TokenizedPair {
    pub fn from_record(r: &RawRecord, max_len: usize) -> Result<Self> {
        let (x_tokens, x_parts) = side_tokens(&r.x, max_len, &r.pair_id, "x")?;
        let (y_tokens, y_parts) = side_tokens(&r.y, max_len, &r.pair_id, "y")?;
        Ok(TokenizedPair {
            pair_id: r.pair_id.clone(),
            x_tokens,
            x_parts,
            y_tokens,
            y_parts,
            label: r.label,
            task: r.task,
        })
    }

    /// Maps both sides through `vocab`, truncating to `max_len`.
    pub fn to_example(&self, vocab: &Vocabulary, max_len: usize) -> Result<Example> {
        let side = |tokens: &[String], parts: [usize; 3]| {
            let kept: Vec<String> = tokens.iter().take(max_len).cloned().collect();
            KnowledgeUnit::from_tokens(kept, parts.map(|p| p.min(max_len)), vocab)
                .map_err(|e| e.with_context(format!("pair {}", self.pair_id)))
        };
        Ok(Example {
            pair_id: self.pair_id.clone(),
            x: side(&self.x_tokens, self.x_parts)?,
            y: side(&self.y_tokens, self.y_parts)?,
            label: self.label,
        })
    }
}

/// A labeled pair ready for the model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub pair_id: String,
    pub x: KnowledgeUnit,
    pub y: KnowledgeUnit,
    pub label: usize,
}

/// Tokenizes every record, failing on the first empty unit.
pub fn tokenize_records(records: &[RawRecord], max_len: usize) -> Result<Vec<TokenizedPair>> {
    records.iter().map(|r| TokenizedPair::from_record(r, max_len)).collect()
}

/// Vocabulary over both sides of every pair.
pub fn vocab_from_pairs(pairs: &[TokenizedPair], min_count: usize) -> Result<Vocabulary> {
    Vocabulary::build(pairs.iter().flat_map(|p| [&p.x_tokens, &p.y_tokens]), min_count)
}

/// Maps tokenized pairs to model inputs.
pub fn to_examples(pairs: &[TokenizedPair], vocab: &Vocabulary, max_len: usize) -> Result<Vec<Example>> {
    pairs.iter().map(|p| p.to_example(vocab, max_len)).collect()
}

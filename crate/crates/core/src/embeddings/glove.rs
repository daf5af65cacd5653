//! Desk-scale GloVe: windowed co-occurrence counting and weighted
//! least-squares fitting of log counts with AdaGrad.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::table::{oov_vector, EmbeddingTable};
use super::vocab::{Vocabulary, OOV};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Sparse symmetric co-occurrence counts keyed by vocabulary index.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CooccurrenceCounts {
    pub counts: BTreeMap<(usize, usize), f64>,
    pub window: usize,
    pub symmetric: bool,
}

impl CooccurrenceCounts {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.counts.get(&(i, j)).copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Entries as `(i, j, count)` in key order.
    pub fn entries(&self) -> Vec<(usize, usize, f64)> {
        self.counts.iter().map(|(&(i, j), &x)| (i, j, x)).collect()
    }

    /// Adds another shard's counts.
    pub fn merge(&mut self, other: &CooccurrenceCounts) {
        for (&k, &v) in &other.counts {
            *self.counts.entry(k).or_insert(0.0) += v;
        }
    }
}

/// Every pair of in-vocabulary tokens at distance `d <= window` within a
/// sequence contributes `1/d` in both directions. Unknown tokens keep
/// their position but are not counted.
pub fn count_cooccurrence<'t, I, S>(corpus: I, vocab: &Vocabulary, window: usize) -> Result<CooccurrenceCounts>
where
    I: IntoIterator<Item = S>,
    S: IntoIterator<Item = &'t String>,
{
    if window == 0 {
        return Err(Error::Config("co-occurrence window must be at least 1".into()));
    }
    let mut out = CooccurrenceCounts {
        counts: BTreeMap::new(),
        window,
        symmetric: true,
    };
    for seq in corpus {
        let ids: Vec<Option<usize>> = seq.into_iter().map(|t| vocab.get(t)).collect();
        for (pos, &center) in ids.iter().enumerate() {
            let Some(ci) = center else { continue };
            for d in 1..=window.min(pos) {
                let Some(ctx) = ids[pos - d] else { continue };
                let w = 1.0 / d as f64;
                *out.counts.entry((ci, ctx)).or_insert(0.0) += w;
                *out.counts.entry((ctx, ci)).or_insert(0.0) += w;
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GloveConfig {
    pub dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub x_max: f64,
    pub alpha: f64,
    pub seed: u64,
}

impl Default for GloveConfig {
    fn default() -> Self {
        GloveConfig {
            dim: 300,
            epochs: 25,
            learning_rate: 0.05,
            x_max: 100.0,
            alpha: 0.75,
            seed: 1,
        }
    }
}

/// Weighting `f(x) = min(1, (x / x_max)^alpha)`.
pub fn glove_weight(x: f64, x_max: f64, alpha: f64) -> f64 {
    if x < x_max {
        (x / x_max).powf(alpha)
    } else {
        1.0
    }
}

/// Word and context vectors plus biases.
#[derive(Debug, Clone, PartialEq)]
pub struct GloveModel {
    pub dim: usize,
    pub word: Vec<Vec<f64>>,
    pub context: Vec<Vec<f64>>,
    pub word_bias: Vec<f64>,
    pub context_bias: Vec<f64>,
}

impl GloveModel {
    pub fn init(vocab_size: usize, dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| (rng.gen::<f64>() - 0.5) / dim as f64).collect() };
        let word = (0..vocab_size).map(|_| draw(dim)).collect();
        let context = (0..vocab_size).map(|_| draw(dim)).collect();
        let word_bias = draw(vocab_size);
        let context_bias = draw(vocab_size);
        GloveModel {
            dim,
            word,
            context,
            word_bias,
            context_bias,
        }
    }

    /// `w_iᵀw̃_j + b_i + b̃_j`
    pub fn predict(&self, i: usize, j: usize) -> f64 {
        let dot: f64 = self.word[i].iter().zip(&self.context[j]).map(|(a, b)| a * b).sum();
        dot + self.word_bias[i] + self.context_bias[j]
    }

    /// `Σ f(X_ij) (w_iᵀw̃_j + b_i + b̃_j − log X_ij)²`
    pub fn objective(&self, counts: &CooccurrenceCounts, x_max: f64, alpha: f64) -> f64 {
        counts
            .counts
            .iter()
            .map(|(&(i, j), &x)| {
                let diff = self.predict(i, j) - x.ln();
                glove_weight(x, x_max, alpha) * diff * diff
            })
            .sum()
    }

    /// Table whose real-word rows are `w + w̃`.
    pub fn to_table(&self) -> EmbeddingTable {
        let v = self.word.len();
        let mut table = EmbeddingTable::oov_filled(v, self.dim);
        let oov = oov_vector(self.dim);
        for i in 0..v {
            let row: Vec<f64> = match i {
                0 => vec![0.0; self.dim],
                OOV => oov.clone(),
                _ => self.word[i].iter().zip(&self.context[i]).map(|(a, b)| a + b).collect(),
            };
            table.vectors.data_mut()[i * self.dim..(i + 1) * self.dim].copy_from_slice(&row);
        }
        table
    }
}

#[derive(Debug, Clone)]
pub struct GloveOutcome {
    pub model: GloveModel,
    /// Objective before training followed by the value after each epoch.
    pub losses: Vec<f64>,
}

impl GloveOutcome {
    pub fn table(&self) -> EmbeddingTable {
        self.model.to_table()
    }
}

/// Fits vectors for a vocabulary of `vocab_size` entries with AdaGrad.
pub fn train_glove(counts: &CooccurrenceCounts, vocab_size: usize, cfg: &GloveConfig) -> Result<GloveOutcome> {
    if counts.is_empty() {
        return Err(Error::Data("no co-occurrences to train on".into()));
    }
    if cfg.dim == 0 || cfg.learning_rate <= 0.0 {
        return Err(Error::Config("GloVe needs a positive dimension and learning rate".into()));
    }
    if let Some(&(i, j)) = counts.counts.keys().find(|&&(i, j)| i >= vocab_size || j >= vocab_size) {
        return Err(Error::Data(format!("pair ({i}, {j}) outside vocabulary of {vocab_size}")));
    }
    let mut model = GloveModel::init(vocab_size, cfg.dim, cfg.seed);
    let mut sq_word = vec![vec![1.0f64; cfg.dim]; vocab_size];
    let mut sq_ctx = vec![vec![1.0f64; cfg.dim]; vocab_size];
    let mut sq_wb = vec![1.0f64; vocab_size];
    let mut sq_cb = vec![1.0f64; vocab_size];

    let mut losses = vec![model.objective(counts, cfg.x_max, cfg.alpha)];
    let mut entries = counts.entries();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9E37_79B9_7F4A_7C15);
    for epoch in 0..cfg.epochs {
        entries.shuffle(&mut rng);
        for &(i, j, x) in &entries {
            let diff = model.predict(i, j) - x.ln();
            let fdiff = 2.0 * glove_weight(x, cfg.x_max, cfg.alpha) * diff;
            if !fdiff.is_finite() {
                return Err(divergence(epoch, cfg.learning_rate));
            }
            for k in 0..cfg.dim {
                let gw = fdiff * model.context[j][k];
                let gc = fdiff * model.word[i][k];
                model.word[i][k] -= cfg.learning_rate * gw / sq_word[i][k].sqrt();
                model.context[j][k] -= cfg.learning_rate * gc / sq_ctx[j][k].sqrt();
                sq_word[i][k] += gw * gw;
                sq_ctx[j][k] += gc * gc;
            }
            model.word_bias[i] -= cfg.learning_rate * fdiff / sq_wb[i].sqrt();
            model.context_bias[j] -= cfg.learning_rate * fdiff / sq_cb[j].sqrt();
            sq_wb[i] += fdiff * fdiff;
            sq_cb[j] += fdiff * fdiff;
        }
        let loss = model.objective(counts, cfg.x_max, cfg.alpha);
        if !loss.is_finite() {
            return Err(divergence(epoch, cfg.learning_rate));
        }
        log::debug!("glove epoch {} loss {loss:.6}", epoch + 1);
        losses.push(loss);
    }
    Ok(GloveOutcome { model, losses })
}

fn divergence(epoch: usize, lr: f64) -> Error {
    Error::Divergence(format!(
        "GloVe loss became non-finite in epoch {}; try a learning rate below {lr}",
        epoch + 1
    ))
}

/// Builds a matrix view of the word vectors (for inspection and tests).
pub fn word_matrix(model: &GloveModel) -> Tensor {
    let data = model.word.iter().flatten().copied().collect();
    Tensor::matrix(model.word.len(), model.dim, data).expect("rectangular")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seqs(text: &str) -> Vec<Vec<String>> {
        text.lines()
            .map(|l| l.split_whitespace().map(String::from).collect())
            .collect()
    }

    #[test]
    fn adjacent_pair() {
        let corpus = seqs("a b");
        let v = Vocabulary::build(&corpus, 1).unwrap();
        let c = count_cooccurrence(&corpus, &v, 1).unwrap();
        let (a, b) = (v.id("a"), v.id("b"));
        assert_eq!(c.get(a, b), 1.0);
        assert_eq!(c.get(b, a), 1.0);
    }

    #[test]
    fn inverse_distance_weighting() {
        let corpus = seqs("a b c");
        let v = Vocabulary::build(&corpus, 1).unwrap();
        let c = count_cooccurrence(&corpus, &v, 2).unwrap();
        assert_eq!(c.get(v.id("a"), v.id("c")), 0.5);
        assert_eq!(c.get(v.id("c"), v.id("a")), 0.5);
        let c1 = count_cooccurrence(&corpus, &v, 1).unwrap();
        assert_eq!(c1.get(v.id("a"), v.id("c")), 0.0);
    }

    #[test]
    fn single_token_has_no_pairs() {
        let corpus = seqs("a");
        let v = Vocabulary::build(&corpus, 1).unwrap();
        assert!(count_cooccurrence(&corpus, &v, 3).unwrap().is_empty());
        assert!(count_cooccurrence(&corpus, &v, 0).is_err());
    }

    #[test]
    fn sequences_do_not_bleed() {
        let corpus = seqs("a\nb");
        let v = Vocabulary::build(&corpus, 1).unwrap();
        assert!(count_cooccurrence(&corpus, &v, 5).unwrap().is_empty());
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let corpus = seqs("a b a b");
        let v = Vocabulary::build(&corpus, 1).unwrap();
        let c = count_cooccurrence(&corpus, &v, 2).unwrap();
        let cfg = GloveConfig {
            dim: 4,
            epochs: 0,
            ..GloveConfig::default()
        };
        let out = train_glove(&c, v.len(), &cfg).unwrap();
        assert_eq!(out.model, GloveModel::init(v.len(), 4, cfg.seed));
        assert_eq!(out.losses.len(), 1);
    }

    #[test]
    fn two_token_optimum() {
        let mut c = CooccurrenceCounts {
            window: 1,
            symmetric: true,
            ..Default::default()
        };
        c.counts.insert((2, 3), 50.0);
        c.counts.insert((3, 2), 50.0);
        let cfg = GloveConfig {
            dim: 4,
            epochs: 300,
            learning_rate: 0.1,
            ..GloveConfig::default()
        };
        let out = train_glove(&c, 4, &cfg).unwrap();
        let fit = out.model.predict(2, 3);
        assert!((fit - 50f64.ln()).abs() < 0.1, "{fit}");
    }

    #[test]
    fn divergence_is_reported() {
        let mut c = CooccurrenceCounts::default();
        c.counts.insert((2, 3), 1e300);
        let cfg = GloveConfig {
            dim: 2,
            epochs: 3,
            learning_rate: 1e300,
            ..GloveConfig::default()
        };
        assert!(matches!(train_glove(&c, 4, &cfg), Err(Error::Divergence(_))));
    }

    #[test]
    fn empty_counts_rejected() {
        assert!(train_glove(&CooccurrenceCounts::default(), 4, &GloveConfig::default()).is_err());
    }
}

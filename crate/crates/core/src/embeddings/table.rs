use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::vocab::{Vocabulary, PAD};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

const OOV_SEED: u64 = 0x05EE_D00F;
const OOV_BOUND: f64 = 0.05;

/// The shared vector given to every word without a pre-trained row.
pub fn oov_vector(dim: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(OOV_SEED);
    (0..dim).map(|_| rng.gen_range(-OOV_BOUND..OOV_BOUND)).collect()
}

/// One `dim`-wide row per vocabulary entry. Row 0 (padding) is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub vectors: Tensor,
    pub trainable: bool,
}

impl EmbeddingTable {
    /// Pad row zero, every other row the OOV vector.
    pub fn oov_filled(vocab_size: usize, dim: usize) -> Self {
        let oov = oov_vector(dim);
        let mut data = Vec::with_capacity(vocab_size * dim);
        for i in 0..vocab_size {
            if i == PAD {
                data.extend(std::iter::repeat_n(0.0, dim));
            } else {
                data.extend_from_slice(&oov);
            }
        }
        EmbeddingTable {
            vectors: Tensor::matrix(vocab_size, dim, data).expect("sized above"),
            trainable: false,
        }
    }

    /// Random rows drawn from uniform(-bound, bound); pad zero, OOV the shared vector.
    pub fn random(vocab_size: usize, dim: usize, bound: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut table = EmbeddingTable::oov_filled(vocab_size, dim);
        for i in 2..vocab_size {
            for j in 0..dim {
                table.vectors.data_mut()[i * dim + j] = rng.gen_range(-bound..bound);
            }
        }
        table
    }

    pub fn from_tensor(vectors: Tensor) -> Result<Self> {
        if vectors.shape().len() != 2 {
            return Err(Error::dim("embedding table", vectors.shape(), &[0, 0]));
        }
        if !vectors.all_finite() {
            return Err(Error::Numeric("embedding table has non-finite entries".into()));
        }
        Ok(EmbeddingTable {
            vectors,
            trainable: false,
        })
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn len(&self) -> usize {
        self.vectors.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row(&self, id: usize) -> &[f64] {
        self.vectors.row(id)
    }

    /// Row of `token`: its own if known, else the OOV row.
    pub fn lookup(&self, vocab: &Vocabulary, token: &str) -> &[f64] {
        self.row(vocab.id(token))
    }
}

/// Result of reading a GloVe-format file against a vocabulary.
#[derive(Debug, Clone)]
pub struct LoadedEmbeddings {
    pub table: EmbeddingTable,
    /// Fraction of real vocabulary words found in the file.
    pub coverage: f64,
}

/// Reads `word v1 ... v_dim` lines. Vocabulary words missing from the file
/// get the OOV vector; the pad row is zero.
pub fn load_embeddings(path: impl AsRef<Path>, vocab: &Vocabulary, dim: usize) -> Result<LoadedEmbeddings> {
    let path = path.as_ref();
    if dim == 0 {
        return Err(Error::Config("embedding dimension must be positive".into()));
    }
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut table = EmbeddingTable::oov_filled(vocab.len(), dim);
    let mut found = vec![false; vocab.len()];
    let mut first = true;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let mut parts = line.split(' ');
        let word = parts.next().unwrap_or_default();
        let values = parts
            .map(|p| p.parse::<f64>().map_err(|_| parse_err(format!("'{p}' is not a number"))))
            .collect::<Result<Vec<f64>>>()?;
        if values.len() != dim {
            if first {
                return Err(Error::Config(format!(
                    "{} holds {}-dimensional vectors, expected {dim}",
                    path.display(),
                    values.len()
                )));
            }
            return Err(parse_err(format!("expected {dim} values, found {}", values.len())));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(parse_err(format!("non-finite value {bad}")));
        }
        first = false;
        if let Some(id) = vocab.get(word) {
            table.vectors.data_mut()[id * dim..(id + 1) * dim].copy_from_slice(&values);
            found[id] = true;
        }
    }
    let real = vocab.len().saturating_sub(2);
    let hits = found.iter().skip(2).filter(|&&f| f).count();
    let coverage = if real == 0 { 0.0 } else { hits as f64 / real as f64 };
    Ok(LoadedEmbeddings { table, coverage })
}

/// Writes real-word rows as GloVe text with six decimals, no header.
pub fn save_embeddings(path: impl AsRef<Path>, table: &EmbeddingTable, vocab: &Vocabulary) -> Result<()> {
    let path = path.as_ref();
    if table.len() != vocab.len() {
        return Err(Error::dim("save_embeddings", &[table.len(), table.dim()], &[vocab.len()]));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    for id in 2..vocab.len() {
        write!(w, "{}", vocab.token(id).unwrap_or_default()).map_err(io)?;
        for v in table.row(id) {
            write!(w, " {v:.6}").map_err(io)?;
        }
        writeln!(w).map_err(io)?;
    }
    w.flush().map_err(io)
}

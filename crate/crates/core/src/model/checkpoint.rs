//! Self-contained model files: a magic tag, a format version, a JSON header
//! and the raw little-endian parameter values.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::AsimConfig;
use super::net::Asim;
use crate::autodiff::Tensor;
use crate::embeddings::{EmbeddingTable, Vocabulary};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"ASIMCKPT";
const VERSION: u32 = 1;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
    trainable: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    tool_version: String,
    config: AsimConfig,
    vocab_hash: String,
    vocab: Vec<String>,
    params: Vec<ParamEntry>,
    meta: BTreeMap<String, String>,
}

/// A model together with the vocabulary it was trained with.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: Asim,
    pub vocab: Vocabulary,
    /// Free-form annotations such as the epoch number.
    pub meta: BTreeMap<String, String>,
}

impl Checkpoint {
    pub fn new(model: Asim, vocab: Vocabulary) -> Self {
        Checkpoint {
            model,
            vocab,
            meta: BTreeMap::new(),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let store = &self.model.store;
        let header = Header {
            tool_version: TOOL_VERSION.to_string(),
            config: self.model.config.clone(),
            vocab_hash: self.vocab.hash(),
            vocab: self.vocab.tokens().to_vec(),
            params: (0..store.len())
                .map(|i| ParamEntry {
                    name: store.name(i).to_string(),
                    shape: store.tensors()[i].shape().to_vec(),
                    trainable: store.is_trainable(i),
                })
                .collect(),
            meta: self.meta.clone(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let mut out = Vec::with_capacity(json.len() + 20 + store.num_scalars() * 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for t in store.tensors() {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("not an ASIM checkpoint"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
        }
        let len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let body = bytes.get(20..20 + len).ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(body).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let vocab = Vocabulary::from_tokens(header.vocab.iter().cloned())?;
        if vocab.hash() != header.vocab_hash {
            return Err(bad("vocabulary hash does not match stored tokens"));
        }
        let cfg = header.config;
        let placeholder = EmbeddingTable::oov_filled(vocab.len(), cfg.embed_dim);
        let mut model = Asim::new(cfg, &placeholder, 0)?;
        if model.store.len() != header.params.len() {
            return Err(bad("parameter list does not match the configuration"));
        }
        let mut offset = 20 + len;
        for (i, entry) in header.params.iter().enumerate() {
            let expected = model.store.tensors()[i].shape().to_vec();
            if entry.name != model.store.name(i) || entry.shape != expected {
                return Err(Error::Checkpoint(format!(
                    "parameter {i} is {} {:?}, expected {} {:?}",
                    entry.name,
                    entry.shape,
                    model.store.name(i),
                    expected
                )));
            }
            let n: usize = entry.shape.iter().product();
            let raw = bytes
                .get(offset..offset + 8 * n)
                .ok_or_else(|| bad("truncated parameter data"))?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            model.store.tensors_mut()[i] = Tensor::new(entry.shape.clone(), data)?;
            offset += 8 * n;
        }
        if offset != bytes.len() {
            return Err(bad("trailing bytes after parameter data"));
        }
        Ok(Checkpoint {
            model,
            vocab,
            meta: header.meta,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = self.to_bytes()?;
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Checkpoint(m) => Error::Checkpoint(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

/// SHA-256 of a file, hex encoded.
pub fn file_hash(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

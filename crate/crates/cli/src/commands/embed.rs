use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use asim::embeddings::{count_cooccurrence, save_embeddings, train_glove, CooccurrenceCounts, GloveConfig, Vocabulary};
use asim::text::{clean_text, tokenize};
use serde_json::json;

use crate::args::EmbedCommand;
use crate::files::{create_parent, provenance, write_sidecar};

/// One document per line, run through the same cleaning as knowledge units.
pub fn read_corpus(path: &Path) -> Result<Vec<Vec<String>>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading corpus {}", path.display()))?;
    Ok(text
        .lines()
        .map(|l| tokenize(&clean_text(l, true)))
        .filter(|t| !t.is_empty())
        .collect())
}

pub fn write_cooccurrence(path: &Path, counts: &CooccurrenceCounts, vocab: &Vocabulary) -> Result<()> {
    create_parent(path)?;
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    let header = provenance(&[
        ("vocab_hash", vocab.hash()),
        ("window", counts.window.to_string()),
        ("symmetric", counts.symmetric.to_string()),
    ]);
    writeln!(w, "# {header}")?;
    for (i, j, x) in counts.entries() {
        writeln!(w, "{i} {j} {x}")?;
    }
    w.flush()?;
    Ok(())
}

fn header_field<'a>(header: &'a str, key: &str) -> Option<&'a str> {
    header
        .split_whitespace()
        .find_map(|f| f.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
}

/// Reads a file written by [`write_cooccurrence`], checking it was built
/// against `vocab`.
pub fn read_cooccurrence(path: &Path, vocab: &Vocabulary) -> Result<CooccurrenceCounts> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut counts = CooccurrenceCounts {
        counts: BTreeMap::new(),
        window: 0,
        symmetric: true,
    };
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let bad = || format!("{}:{}: expected 'i j count'", path.display(), n + 1);
        if let Some(h) = line.strip_prefix('#') {
            if let Some(hash) = header_field(h, "vocab_hash") {
                if hash != vocab.hash() {
                    bail!("{} was counted with a different vocabulary", path.display());
                }
            }
            counts.window = header_field(h, "window").and_then(|w| w.parse().ok()).unwrap_or(0);
            counts.symmetric = header_field(h, "symmetric") != Some("false");
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 3 {
            bail!(bad());
        }
        let i: usize = f[0].parse().with_context(bad)?;
        let j: usize = f[1].parse().with_context(bad)?;
        let x: f64 = f[2].parse().with_context(bad)?;
        if i >= vocab.len() || j >= vocab.len() {
            bail!("{}:{}: index outside the vocabulary of {}", path.display(), n + 1, vocab.len());
        }
        counts.counts.insert((i, j), x);
    }
    Ok(counts)
}

/// Words and vectors of a GloVe text file, in file order.
pub fn read_vectors(path: &Path) -> Result<Vec<(String, Vec<f64>)>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let mut parts = line.split_whitespace();
        let Some(word) = parts.next() else { continue };
        let v = parts
            .map(str::parse)
            .collect::<Result<Vec<f64>, _>>()
            .with_context(|| format!("{}:{}: bad number", path.display(), n + 1))?;
        out.push((word.to_string(), v));
    }
    Ok(out)
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// `top` nearest words to `token` by cosine; `None` when the token is
/// absent (also after normalisation through the tokenizer).
pub fn neighbours(vectors: &[(String, Vec<f64>)], token: &str, top: usize) -> Option<(String, Vec<(String, f64)>)> {
    let find = |t: &str| vectors.iter().position(|(w, _)| w == t);
    let idx = find(token).or_else(|| tokenize(&clean_text(token, false)).first().and_then(|t| find(t)))?;
    let (word, query) = &vectors[idx];
    let mut scored: Vec<(String, f64)> = vectors
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != idx)
        .map(|(_, (w, v))| (w.clone(), cosine(query, v)))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(top);
    Some((word.clone(), scored))
}

pub fn embed(cmd: &EmbedCommand, out: &mut dyn Write) -> Result<()> {
    match cmd {
        EmbedCommand::BuildVocab { corpus, min_count, out: path } => {
            let docs = read_corpus(corpus)?;
            let vocab = Vocabulary::build(&docs, *min_count)?;
            create_parent(path)?;
            vocab.save(path)?;
            write_sidecar(path, json!({ "corpus": corpus.display().to_string(), "min_count": min_count }))?;
            writeln!(out, "vocabulary of {} tokens from {} documents -> {}", vocab.len(), docs.len(), path.display())?;
        }
        EmbedCommand::Cooccur { corpus, vocab, window, out: path } => {
            let docs = read_corpus(corpus)?;
            let vocab = Vocabulary::load(vocab)?;
            let counts = count_cooccurrence(&docs, &vocab, *window)?;
            if counts.is_empty() {
                bail!("{} yields no co-occurrences (empty corpus or no known tokens)", corpus.display());
            }
            write_cooccurrence(path, &counts, &vocab)?;
            writeln!(out, "{} non-zero co-occurrence entries -> {}", counts.len(), path.display())?;
        }
        EmbedCommand::Train {
            cooccur,
            vocab,
            dim,
            epochs,
            lr,
            x_max,
            alpha,
            seed,
            out: path,
        } => {
            let vocab = Vocabulary::load(vocab)?;
            let counts = read_cooccurrence(cooccur, &vocab)?;
            let cfg = GloveConfig {
                dim: *dim,
                epochs: *epochs,
                learning_rate: *lr,
                x_max: *x_max,
                alpha: *alpha,
                seed: *seed,
            };
            let outcome = train_glove(&counts, vocab.len(), &cfg)?;
            for (e, loss) in outcome.losses.iter().enumerate() {
                writeln!(out, "epoch {e:>3}  loss {loss:.6}")?;
            }
            create_parent(path)?;
            save_embeddings(path, &outcome.table(), &vocab)?;
            write_sidecar(
                path,
                json!({
                    "cooccurrence": cooccur.display().to_string(),
                    "vocab_hash": vocab.hash(),
                    "dim": dim, "epochs": epochs, "learning_rate": lr,
                    "x_max": x_max, "alpha": alpha, "seed": seed,
                    "losses": outcome.losses,
                }),
            )?;
            writeln!(out, "{dim}-d vectors for {} words -> {}", vocab.len() - 2, path.display())?;
        }
        EmbedCommand::Inspect { embeddings, token, top } => {
            let vectors = read_vectors(embeddings)?;
            match neighbours(&vectors, token, *top) {
                None => writeln!(out, "'{token}' is out of vocabulary (not in {})", embeddings.display())?,
                Some((word, list)) => {
                    writeln!(out, "nearest to '{word}':")?;
                    for (w, s) in list {
                        writeln!(out, "  {w:<20} {s:.4}")?;
                    }
                }
            }
        }
    }
    Ok(())
}

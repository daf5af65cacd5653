//! Token caches, sidecar metadata and provenance lines.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use asim::model::TOOL_VERSION;
use asim::text::{parse_dataset, tokenize_records, TokenizedPair};
use asim::Task;
use serde_json::json;

/// `asim <version>` followed by `key=value` fields.
pub fn provenance(fields: &[(&str, String)]) -> String {
    let mut s = format!("asim {TOOL_VERSION}");
    for (k, v) in fields {
        s.push_str(&format!(" {k}={v}"));
    }
    s
}

/// Formats without room for comments get a `<file>.meta.json` next to them.
pub fn write_sidecar(path: &Path, fields: serde_json::Value) -> Result<PathBuf> {
    let mut meta = json!({ "tool": "asim", "tool_version": TOOL_VERSION });
    if let (Some(m), Some(extra)) = (meta.as_object_mut(), fields.as_object()) {
        m.extend(extra.clone());
    }
    let mut name = path.as_os_str().to_owned();
    name.push(".meta.json");
    let side = PathBuf::from(name);
    fs::write(&side, serde_json::to_string_pretty(&meta)? + "\n").with_context(|| format!("writing {}", side.display()))?;
    Ok(side)
}

pub fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

/// JSON lines, one tokenized pair each, after a `#` provenance line.
pub fn write_cache(path: &Path, header: &str, pairs: &[TokenizedPair]) -> Result<()> {
    create_parent(path)?;
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "# {header}")?;
    for p in pairs {
        serde_json::to_writer(&mut w, p)?;
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_cache(path: &Path) -> Result<Vec<TokenizedPair>> {
    let file = File::open(path).with_context(|| format!("opening cache {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let pair = serde_json::from_str(&line).with_context(|| format!("{}:{}: malformed cache entry", path.display(), i + 1))?;
        out.push(pair);
    }
    Ok(out)
}

pub fn is_cache(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "jsonl")
}

/// Loads a labelled split from a token cache or a raw TSV file.
pub fn load_split(path: &Path, task: Task, max_len: usize) -> Result<Vec<TokenizedPair>> {
    let pairs = if is_cache(path) {
        read_cache(path)?
    } else {
        tokenize_records(&parse_dataset(path, task)?, max_len)?
    };
    if pairs.is_empty() {
        bail!("{} holds no pairs", path.display());
    }
    if let Some(p) = pairs.iter().find(|p| p.task != task) {
        bail!(
            "{} is a {} split (pair {}) but the model predicts {} ({} classes)",
            path.display(),
            p.task,
            p.pair_id,
            task,
            task.num_classes()
        );
    }
    Ok(pairs)
}

/// Runs `f` on a dedicated pool when a thread count is requested.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        Some(n) => Ok(rayon::ThreadPoolBuilder::new().num_threads(n).build()?.install(f)),
        None => Ok(f()),
    }
}

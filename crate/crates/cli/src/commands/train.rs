use std::fs;
use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use asim::embeddings::{load_embeddings, EmbeddingTable, Vocabulary};
use asim::eval::{run_ablation, AblationData, AblationTable};
use asim::model::{file_hash, Asim, Variant};
use asim::text::{split_records, to_examples, Example};
use asim::train::{config_hash, train as run_training, TrainConfig};

use crate::args::TrainArgs;
use crate::files::{load_split, provenance, with_threads};
use crate::settings::Settings;

/// Uniform bound for random vectors when no embedding file is given.
const RANDOM_EMBEDDING_BOUND: f64 = 0.5;

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub out: PathBuf,
    pub first_epoch_loss: Option<f64>,
    pub best: Option<(usize, f64)>,
    pub last_checkpoint: PathBuf,
    pub checkpoint_sha256: String,
}

struct Prepared {
    settings: Settings,
    vocab: Vocabulary,
    train: Vec<Example>,
    val: Vec<Example>,
    test: Option<Vec<Example>>,
    table: EmbeddingTable,
}

fn prepare(args: &TrainArgs, out: &mut dyn Write) -> Result<Prepared> {
    let settings = Settings::resolve(&args.hyper)?;
    writeln!(out, "effective config:")?;
    for line in settings.to_kv().lines() {
        writeln!(out, "  {line}")?;
    }
    let task = settings.task;
    let max_len = settings.model.max_len;
    let vocab_path = args
        .vocab
        .clone()
        .unwrap_or_else(|| args.cache.with_file_name("vocab.txt"));
    let vocab = Vocabulary::load(&vocab_path).with_context(|| format!("loading vocabulary {}", vocab_path.display()))?;

    let pairs = load_split(&args.cache, task, max_len)?;
    let (train_pairs, val_pairs) = match &args.val {
        Some(p) => (pairs, load_split(p, task, max_len)?),
        None => {
            if settings.val_fraction == 0.0 {
                bail!("no --val split given and val-fraction is 0");
            }
            let f = settings.val_fraction;
            let mut parts = split_records(&pairs, &[1.0 - f, f], settings.train.seed).into_iter();
            (parts.next().unwrap_or_default(), parts.next().unwrap_or_default())
        }
    };
    if train_pairs.is_empty() || val_pairs.is_empty() {
        bail!("train and validation splits must both be non-empty");
    }
    let test = match &args.test {
        Some(p) => Some(to_examples(&load_split(p, task, max_len)?, &vocab, max_len)?),
        None => None,
    };
    let dim = settings.model.embed_dim;
    let table = match &settings.embeddings {
        Some(path) => {
            let loaded = load_embeddings(path, &vocab, dim)?;
            writeln!(out, "embeddings: {} ({:.1}% of the vocabulary covered)", path.display(), 100.0 * loaded.coverage)?;
            loaded.table
        }
        None => {
            writeln!(out, "embeddings: none given, using random {dim}-d vectors")?;
            EmbeddingTable::random(vocab.len(), dim, RANDOM_EMBEDDING_BOUND, settings.train.seed)
        }
    };
    writeln!(out, "data: {} train / {} validation pairs, vocabulary {}", train_pairs.len(), val_pairs.len(), vocab.len())?;
    Ok(Prepared {
        train: to_examples(&train_pairs, &vocab, max_len)?,
        val: to_examples(&val_pairs, &vocab, max_len)?,
        test,
        vocab,
        table,
        settings,
    })
}

fn train_config(s: &Settings) -> TrainConfig {
    TrainConfig {
        checkpoint_dir: Some(s.out.clone()),
        log_path: Some(s.out.join("train_log.csv")),
        ..s.train.clone()
    }
}

fn write_effective_config(s: &Settings, hash: &str) -> Result<()> {
    let path = s.out.join("config.txt");
    let text = format!("# {}\n{}", provenance(&[("config_hash", hash.to_string())]), s.to_kv());
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn train(args: &TrainArgs, out: &mut dyn Write) -> Result<TrainSummary> {
    let p = prepare(args, out)?;
    let s = &p.settings;
    fs::create_dir_all(&s.out).with_context(|| format!("creating {}", s.out.display()))?;
    let tcfg = train_config(s);
    let hash = config_hash(&s.model, &tcfg);
    write_effective_config(s, &hash)?;

    let model = Asim::new(s.model.clone(), &p.table, s.train.seed)?;
    let outcome = with_threads(s.threads, || run_training(model, &p.vocab, &p.train, &p.val, &tcfg))??;
    for r in &outcome.log {
        let f1 = r.val_micro_f1.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into());
        writeln!(out, "epoch {:>3}  loss {:.6}  val micro-F1 {f1}  {:.1}s", r.epoch, r.train_loss, r.seconds)?;
    }
    let last = s.out.join("last.ckpt");
    let sha = file_hash(&last)?;
    if let Some((_, epoch, f1)) = &outcome.best {
        writeln!(out, "best validation micro-F1 {f1:.4} at epoch {epoch} -> {}", s.out.join("best.ckpt").display())?;
    }
    writeln!(out, "last checkpoint {} (sha256 {sha})", last.display())?;
    Ok(TrainSummary {
        out: s.out.clone(),
        first_epoch_loss: outcome.log.first().map(|r| r.train_loss),
        best: outcome.best.as_ref().map(|b| (b.1, b.2)),
        last_checkpoint: last,
        checkpoint_sha256: sha,
    })
}

pub fn ablation(args: &TrainArgs, out: &mut dyn Write) -> Result<AblationTable> {
    let p = prepare(args, out)?;
    let s = &p.settings;
    if !(s.model.use_attention && s.model.use_fusion && s.model.use_shortcuts) {
        bail!("the ablation run starts from the full model; drop --ablate");
    }
    fs::create_dir_all(&s.out).with_context(|| format!("creating {}", s.out.display()))?;
    let mut tcfg = train_config(s);
    tcfg.log_path = None;
    let hash = config_hash(&s.model, &tcfg);
    write_effective_config(s, &hash)?;
    let data = AblationData {
        train: &p.train,
        val: &p.val,
        test: p.test.as_deref(),
    };
    let table = with_threads(s.threads, || {
        run_ablation(data, &s.model, &p.table, &p.vocab, &tcfg, s.train.seed, &Variant::ABLATIONS)
    })??;
    let header = provenance(&[("config_hash", hash)]);
    fs::write(s.out.join("ablation.txt"), format!("# {header}\n{}", table.to_text()))?;
    fs::write(s.out.join("ablation.json"), table.to_json() + "\n")?;
    write!(out, "{}", table.to_text())?;
    Ok(table)
}

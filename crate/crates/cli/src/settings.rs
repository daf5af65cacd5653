//! Effective training settings: built-in defaults, then command-line
//! flags, then the `--config` file, later sources winning.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use asim::model::AsimConfig;
use asim::train::TrainConfig;
use asim::Task;

use crate::args::Hyper;

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub model: AsimConfig,
    pub train: TrainConfig,
    pub task: Task,
    pub embeddings: Option<PathBuf>,
    pub out: PathBuf,
    pub val_fraction: f64,
    pub threads: Option<usize>,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            model: AsimConfig::default(),
            train: TrainConfig::default(),
            task: Task::Ku4,
            embeddings: None,
            out: PathBuf::from("runs"),
            val_fraction: 0.2,
            threads: None,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| anyhow::anyhow!("invalid value '{value}' for {key}"))
}

fn widths(value: &str) -> Result<Vec<usize>> {
    if value.trim().is_empty() || value.trim() == "none" {
        return Ok(Vec::new());
    }
    value.split(',').map(|w| parse("prediction-hidden", w)).collect()
}

impl Settings {
    /// Applies one `key=value` setting. Keys use the long flag names;
    /// underscores and dashes are interchangeable.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('_', "-");
        let v = value.trim();
        match key.as_str() {
            "seed" => self.train.seed = parse(&key, v)?,
            "epochs" => self.train.epochs = parse(&key, v)?,
            "lr" => self.train.lr = parse(&key, v)?,
            "batch-size" => self.train.batch_size = parse(&key, v)?,
            "clip-norm" => self.train.clip_norm = if v == "none" { None } else { Some(parse(&key, v)?) },
            "eval-every" => self.train.eval_every = parse(&key, v)?,
            "hidden" => self.model.hidden = parse(&key, v)?,
            "max-len" => self.model.max_len = parse(&key, v)?,
            "dropout" => self.model.dropout = parse(&key, v)?,
            "embed-dim" => self.model.embed_dim = parse(&key, v)?,
            "prediction-hidden" => self.model.prediction_hidden_dims = widths(v)?,
            "train-embeddings" => self.model.train_embeddings = parse(&key, v)?,
            "ablate" => {
                self.model.use_attention = true;
                self.model.use_fusion = true;
                self.model.use_shortcuts = true;
                for part in v.split(',').map(str::trim).filter(|p| !p.is_empty() && *p != "none") {
                    match part {
                        "attn" => self.model.use_attention = false,
                        "fl" => self.model.use_fusion = false,
                        "sc" => self.model.use_shortcuts = false,
                        other => bail!("unknown ablation '{other}' (expected attn, fl or sc)"),
                    }
                }
            }
            "task" => {
                self.task = v.parse()?;
                self.model.num_classes = self.task.num_classes();
            }
            "embeddings" => self.embeddings = (!v.is_empty()).then(|| PathBuf::from(v)),
            "out" => self.out = PathBuf::from(v),
            "val-fraction" => self.val_fraction = parse(&key, v)?,
            "threads" => self.threads = Some(parse(&key, v)?),
            other => bail!("unknown setting '{other}'"),
        }
        Ok(())
    }

    /// Defaults, then flags, then the config file.
    pub fn resolve(h: &Hyper) -> Result<Self> {
        let mut s = Settings::default();
        for (k, v) in flag_pairs(h) {
            s.apply(k, &v)?;
        }
        if let Some(path) = &h.config {
            for (k, v) in read_config(path)? {
                s.apply(&k, &v).with_context(|| format!("in {}", path.display()))?;
            }
        }
        s.check()?;
        Ok(s)
    }

    /// Rejects conflicting settings before any data is touched.
    pub fn check(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        if !(0.0..1.0).contains(&self.val_fraction) {
            bail!("val-fraction must lie in [0, 1), got {}", self.val_fraction);
        }
        if self.threads == Some(0) {
            bail!("threads must be at least 1");
        }
        Ok(())
    }

    fn ablate_value(&self) -> String {
        let m = &self.model;
        let parts: Vec<&str> = [(m.use_attention, "attn"), (m.use_fusion, "fl"), (m.use_shortcuts, "sc")]
            .into_iter()
            .filter(|(on, _)| !on)
            .map(|(_, n)| n)
            .collect();
        if parts.is_empty() {
            "none".into()
        } else {
            parts.join(",")
        }
    }

    /// Effective settings as `key=value` lines, readable by `--config`.
    pub fn to_kv(&self) -> String {
        let m = &self.model;
        let t = &self.train;
        let widths: Vec<String> = m.prediction_hidden_dims.iter().map(|w| w.to_string()).collect();
        let mut s = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(s, "{k}={v}");
        };
        line("task", self.task.to_string());
        line("seed", t.seed.to_string());
        line("epochs", t.epochs.to_string());
        line("lr", t.lr.to_string());
        line("batch-size", t.batch_size.to_string());
        line("hidden", m.hidden.to_string());
        line("embed-dim", m.embed_dim.to_string());
        line("max-len", m.max_len.to_string());
        line("dropout", m.dropout.to_string());
        line("prediction-hidden", if widths.is_empty() { "none".into() } else { widths.join(",") });
        line("ablate", self.ablate_value());
        line("train-embeddings", m.train_embeddings.to_string());
        line("clip-norm", t.clip_norm.map(|c| c.to_string()).unwrap_or_else(|| "none".into()));
        line("eval-every", t.eval_every.to_string());
        line("val-fraction", self.val_fraction.to_string());
        line(
            "embeddings",
            self.embeddings.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
        );
        line("out", self.out.display().to_string());
        if let Some(n) = self.threads {
            line("threads", n.to_string());
        }
        s
    }
}

fn flag_pairs(h: &Hyper) -> Vec<(&'static str, String)> {
    let mut v: Vec<(&'static str, String)> = Vec::new();
    macro_rules! push {
        ($($field:ident => $key:literal),* $(,)?) => {
            $(if let Some(x) = &h.$field { v.push(($key, x.to_string())); })*
        };
    }
    // task first: it also fixes the class count
    push!(task => "task", seed => "seed", epochs => "epochs", lr => "lr", batch_size => "batch-size",
        hidden => "hidden", max_len => "max-len", dropout => "dropout", ablate => "ablate",
        embed_dim => "embed-dim", prediction_hidden => "prediction-hidden",
        train_embeddings => "train-embeddings", clip_norm => "clip-norm", eval_every => "eval-every",
        val_fraction => "val-fraction", threads => "threads");
    if let Some(p) = &h.embeddings {
        v.push(("embeddings", p.display().to_string()));
    }
    if let Some(p) = &h.out {
        v.push(("out", p.display().to_string()));
    }
    v
}

/// Reads `key=value` lines; blank lines and `#` comments are skipped.
pub fn read_config(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("{}:{}: expected key=value", path.display(), i + 1);
        };
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

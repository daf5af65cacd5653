//! Mini-batch training with Adam, per-epoch validation and checkpoints.

pub mod adam;
pub mod batch;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use adam::{adam_step, clip_grad_norm, AdamState};
pub use batch::{make_batches, Batch};

use crate::autodiff::Tensor;
use crate::embeddings::Vocabulary;
use crate::error::{Error, Result};
use crate::eval::{confusion_of, metrics};
use crate::model::{Asim, AsimConfig, Checkpoint, Mode, TOOL_VERSION};
use crate::text::Example;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Where per-epoch, best and last checkpoints go; nothing is written when unset.
    pub checkpoint_dir: Option<PathBuf>,
    /// Validate every this many epochs (and always after the last one).
    pub eval_every: usize,
    /// CSV epoch log.
    pub log_path: Option<PathBuf>,
    /// Rescale the batch gradient to at most this L2 norm.
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.0012,
            batch_size: 128,
            epochs: 30,
            seed: 1,
            checkpoint_dir: None,
            eval_every: 1,
            log_path: None,
            clip_norm: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.eval_every == 0 {
            return Err(Error::Config("eval_every must be at least 1".into()));
        }
        if matches!(self.clip_norm, Some(c) if c <= 0.0) {
            return Err(Error::Config("clip_norm must be positive".into()));
        }
        Ok(())
    }
}

/// Short hash of the model and training settings (output paths excluded),
/// for provenance lines.
pub fn config_hash(model: &AsimConfig, train: &TrainConfig) -> String {
    let settings = TrainConfig {
        checkpoint_dir: None,
        log_path: None,
        ..train.clone()
    };
    let json = serde_json::to_string(&(model, settings)).expect("configs serialize");
    hex::encode(&Sha256::digest(json.as_bytes())[..8])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// Absent for epochs without validation.
    pub val_micro_f1: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub last: Checkpoint,
    /// Checkpoint with the best validation micro-F1 and its epoch.
    pub best: Option<(Checkpoint, usize, f64)>,
    pub log: Vec<EpochRecord>,
}

impl TrainOutcome {
    /// Best-validation checkpoint if any epoch was validated, else the last one.
    pub fn selected(&self) -> &Checkpoint {
        self.best.as_ref().map(|b| &b.0).unwrap_or(&self.last)
    }
}

/// Mixes the run seed with epoch, step and example position into a
/// dropout seed, so results do not depend on scheduling.
pub fn example_seed(seed: u64, epoch: usize, step: usize, index: usize) -> u64 {
    let mut h = Sha256::new();
    for v in [seed, epoch as u64, step as u64, index as u64] {
        h.update(v.to_le_bytes());
    }
    u64::from_le_bytes(h.finalize()[..8].try_into().expect("8 bytes"))
}

fn epoch_shuffle_seed(seed: u64, epoch: usize) -> u64 {
    example_seed(seed, epoch, usize::MAX, usize::MAX)
}

/// Mean loss and mean gradient over one batch. Per-example work runs in
/// parallel; reduction happens in batch order, so the result is the same
/// for any thread count.
pub fn batch_gradient(model: &Asim, batch: &Batch, seed: u64, epoch: usize, step: usize) -> Result<(f64, Vec<Option<Tensor>>)> {
    let results: Vec<(f64, Vec<Option<Tensor>>)> = (0..batch.len())
        .into_par_iter()
        .map(|i| {
            let mode = Mode::Train {
                seed: example_seed(seed, epoch, step, batch.indices[i]),
            };
            model.loss_and_grads(&batch.x_ids[i], &batch.y_ids[i], batch.labels[i], mode)
        })
        .collect::<Result<_>>()?;
    let n = results.len() as f64;
    let mut iter = results.into_iter();
    let (mut loss, mut grads) = iter.next().ok_or_else(|| Error::Usage("empty batch".into()))?;
    for (l, g) in iter {
        loss += l;
        for (acc, gi) in grads.iter_mut().zip(g) {
            if let (Some(acc), Some(gi)) = (acc.as_mut(), gi) {
                acc.add_assign(&gi);
            }
        }
    }
    for g in grads.iter_mut().flatten() {
        g.scale_in_place(1.0 / n);
    }
    Ok((loss / n, grads))
}

fn write_log(path: &Path, header: &str, log: &[EpochRecord]) -> Result<()> {
    let mut s = format!("{header}\nepoch,train_loss,val_micro_f1,seconds\n");
    for r in log {
        let f1 = r.val_micro_f1.map(|v| v.to_string()).unwrap_or_default();
        s.push_str(&format!("{},{},{},{:.3}\n", r.epoch, r.train_loss, f1, r.seconds));
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(s.as_bytes()).map_err(|e| Error::io(path, e))
}

fn save(ck: &Checkpoint, dir: &Option<PathBuf>, name: &str) -> Result<()> {
    if let Some(dir) = dir {
        ck.save(dir.join(name))?;
    }
    Ok(())
}

fn annotated(model: &Asim, vocab: &Vocabulary, epoch: usize, hash: &str) -> Checkpoint {
    let mut ck = Checkpoint::new(model.clone(), vocab.clone());
    ck.meta.insert("epoch".into(), epoch.to_string());
    ck.meta.insert("config_hash".into(), hash.to_string());
    ck
}

/// Trains `model` on `train_set`, validating on `val_set`.
///
/// With a checkpoint directory, `epoch-NNN.ckpt`, `best.ckpt` and
/// `last.ckpt` are written as training proceeds; a divergence error leaves
/// the files of the last completed epoch in place.
pub fn train(
    mut model: Asim,
    vocab: &Vocabulary,
    train_set: &[Example],
    val_set: &[Example],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::Data("training and validation splits must be non-empty".into()));
    }
    if let Some(dir) = &cfg.checkpoint_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let hash = config_hash(&model.config, cfg);
    let header = format!("# asim {TOOL_VERSION} config_hash={hash} seed={}", cfg.seed);
    let names = model.store.names().to_vec();
    let mut adam = AdamState::new(model.store.tensors(), cfg.lr);
    let mut log = Vec::new();
    let mut best: Option<(Checkpoint, usize, f64)> = None;

    if cfg.epochs == 0 {
        save(&annotated(&model, vocab, 0, &hash), &cfg.checkpoint_dir, "last.ckpt")?;
    }
    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        let batches = make_batches(train_set, cfg.batch_size, epoch_shuffle_seed(cfg.seed, epoch));
        let mut loss_sum = 0.0;
        for (step, batch) in batches.iter().enumerate() {
            let (loss, mut grads) = batch_gradient(&model, batch, cfg.seed, epoch, step)?;
            if !loss.is_finite() {
                return Err(Error::Divergence(format!(
                    "non-finite loss in epoch {epoch}, step {step}; try a smaller learning rate"
                )));
            }
            if let Some(max) = cfg.clip_norm {
                clip_grad_norm(&mut grads, max);
            }
            adam_step(model.store.tensors_mut(), &grads, &names, &mut adam)?;
            loss_sum += loss * batch.len() as f64;
        }
        let train_loss = loss_sum / train_set.len() as f64;
        let val_micro_f1 = if epoch % cfg.eval_every == 0 || epoch == cfg.epochs {
            Some(metrics(&confusion_of(&model, val_set)?)?.micro_f1)
        } else {
            None
        };
        let record = EpochRecord {
            epoch,
            train_loss,
            val_micro_f1,
            seconds: start.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}: train loss {train_loss:.6}, val micro-F1 {}, {:.1}s",
            val_micro_f1.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into()),
            record.seconds
        );
        log.push(record);

        let ck = annotated(&model, vocab, epoch, &hash);
        save(&ck, &cfg.checkpoint_dir, &format!("epoch-{epoch:03}.ckpt"))?;
        if let Some(f1) = val_micro_f1 {
            if best.as_ref().is_none_or(|b| f1 > b.2) {
                save(&ck, &cfg.checkpoint_dir, "best.ckpt")?;
                best = Some((ck.clone(), epoch, f1));
            }
        }
        save(&ck, &cfg.checkpoint_dir, "last.ckpt")?;
        if let Some(path) = &cfg.log_path {
            write_log(path, &header, &log)?;
        }
    }
    if cfg.epochs == 0 {
        if let Some(path) = &cfg.log_path {
            write_log(path, &header, &log)?;
        }
    }
    if let Some((_, epoch, f1)) = &best {
        log::info!("best validation micro-F1 {f1:.4} at epoch {epoch}");
    }
    Ok(TrainOutcome {
        last: annotated(&model, vocab, cfg.epochs, &hash),
        best,
        log,
    })
}

/// Reads an epoch log written by [`train`].
pub fn read_log(path: impl AsRef<Path>) -> Result<Vec<EpochRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.starts_with("epoch") || line.is_empty() {
            continue;
        }
        let bad = |m: &str| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: m.to_string(),
        };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(bad("expected 4 columns"));
        }
        out.push(EpochRecord {
            epoch: f[0].parse().map_err(|_| bad("bad epoch"))?,
            train_loss: f[1].parse().map_err(|_| bad("bad loss"))?,
            val_micro_f1: if f[2].is_empty() {
                None
            } else {
                Some(f[2].parse().map_err(|_| bad("bad micro-F1"))?)
            },
            seconds: f[3].parse().map_err(|_| bad("bad seconds"))?,
        });
    }
    Ok(out)
}

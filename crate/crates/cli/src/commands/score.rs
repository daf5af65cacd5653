use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use asim::eval::{evaluate, EvalReport};
use asim::model::{file_hash, Checkpoint, Mode};
use asim::text::{assemble_ku, to_examples, KnowledgeUnit};
use asim::Task;
use serde::{Deserialize, Serialize};

use crate::args::{EvalArgs, ExportArgs, PairText, PredictArgs};
use crate::attention::AttentionExport;
use crate::files::{create_parent, load_split, provenance, read_cache};

/// Layout of `report.json` written by `eval`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalFile {
    pub tool_version: String,
    pub checkpoint: String,
    pub checkpoint_sha256: String,
    pub config_hash: Option<String>,
    pub data: String,
    pub task: Task,
    pub report: EvalReport,
}

fn load_checkpoint(path: &Path) -> Result<(Checkpoint, String)> {
    let ck = Checkpoint::load(path).with_context(|| format!("loading checkpoint {}", path.display()))?;
    Ok((ck, file_hash(path)?))
}

fn comment(ck: &Checkpoint, sha: &str) -> String {
    let mut fields = vec![("checkpoint_sha256", sha.to_string())];
    if let Some(h) = ck.meta.get("config_hash") {
        fields.insert(0, ("config_hash", h.clone()));
    }
    provenance(&fields)
}

pub fn eval(args: &EvalArgs, out: &mut dyn Write) -> Result<EvalFile> {
    let (ck, sha) = load_checkpoint(&args.checkpoint)?;
    let model_task = ck.model.config.task();
    let task = match &args.task {
        Some(t) => t.parse()?,
        None => model_task,
    };
    if task != model_task {
        bail!(
            "checkpoint predicts {model_task} ({} classes) but the split is {task} ({} classes)",
            model_task.num_classes(),
            task.num_classes()
        );
    }
    let max_len = ck.model.config.max_len;
    let pairs = load_split(&args.data, task, max_len)?;
    let examples = to_examples(&pairs, &ck.vocab, max_len)?;
    let report = evaluate(&ck.model, &examples, task)?;

    let dir = args
        .out
        .clone()
        .unwrap_or_else(|| args.checkpoint.parent().map(Path::to_path_buf).unwrap_or_default());
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let file = EvalFile {
        tool_version: asim::model::TOOL_VERSION.to_string(),
        checkpoint: args.checkpoint.display().to_string(),
        checkpoint_sha256: sha.clone(),
        config_hash: ck.meta.get("config_hash").cloned(),
        data: args.data.display().to_string(),
        task,
        report,
    };
    let text = format!("# {}\n{}", comment(&ck, &sha), file.report.to_text());
    fs::write(dir.join("report.json"), serde_json::to_string_pretty(&file)? + "\n")?;
    fs::write(dir.join("report.txt"), &text)?;
    write!(out, "{}", file.report.to_text())?;
    writeln!(out, "reports written to {}", dir.display())?;
    Ok(file)
}

fn side(ck: &Checkpoint, title: &str, body: &str, answers: &str, name: &str) -> Result<KnowledgeUnit> {
    assemble_ku(title, body, answers, &ck.vocab, ck.model.config.max_len)
        .map_err(|e| match e {
            e @ asim::Error::EmptyUnit { .. } => anyhow!(
                "{}; markup, code blocks, stop words and punctuation are removed before classification",
                e.with_context(format!("side {name}"))
            ),
            e => e.into(),
        })
}

fn pair_units(ck: &Checkpoint, t: &PairText) -> Result<(KnowledgeUnit, KnowledgeUnit)> {
    Ok((
        side(ck, &t.x_title, &t.x_body, &t.x_answers, "x")?,
        side(ck, &t.y_title, &t.y_body, &t.y_answers, "y")?,
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: &'static str,
    pub probs: Vec<(&'static str, f64)>,
}

pub fn predict(args: &PredictArgs, out: &mut dyn Write) -> Result<Prediction> {
    let (ck, _) = load_checkpoint(&args.checkpoint)?;
    let (x, y) = pair_units(&ck, &args.text)?;
    let trace = ck.model.forward(&x, &y, Mode::Eval)?;
    let task = ck.model.config.task();
    let pred = Prediction {
        label: task.label_name(trace.predicted()),
        probs: task.labels().iter().copied().zip(trace.probs.iter().copied()).collect(),
    };
    writeln!(out, "predicted: {}", pred.label)?;
    for (label, p) in &pred.probs {
        writeln!(out, "  {label:<14} {p:.6}")?;
    }
    Ok(pred)
}

pub fn export_attention(args: &ExportArgs, out: &mut dyn Write) -> Result<(AttentionExport, PathBuf, PathBuf)> {
    let (ck, sha) = load_checkpoint(&args.checkpoint)?;
    if !ck.model.config.use_attention {
        bail!("this checkpoint was trained without the attention layer");
    }
    let (x, y) = match (&args.data, &args.pair_id) {
        (Some(data), Some(id)) => {
            let pairs = read_cache(data)?;
            let p = pairs
                .iter()
                .find(|p| &p.pair_id == id)
                .ok_or_else(|| anyhow!("pair {id} is not in {}", data.display()))?;
            (
                KnowledgeUnit::from_tokens(p.x_tokens.clone(), p.x_parts, &ck.vocab)?,
                KnowledgeUnit::from_tokens(p.y_tokens.clone(), p.y_parts, &ck.vocab)?,
            )
        }
        _ => pair_units(&ck, &args.text)?,
    };
    let trace = ck.model.forward(&x, &y, Mode::Eval)?;
    let weights = trace.weights_x.ok_or_else(|| anyhow!("model returned no attention weights"))?;
    let m = y.len();
    let matrix = weights.data().chunks(m).map(<[f64]>::to_vec).collect();
    let export = AttentionExport::new(x.tokens.clone(), y.tokens.clone(), matrix)?;
    create_parent(&args.out)?;
    let (csv, svg) = export.write(&args.out, &comment(&ck, &sha))?;
    for (t, j) in export.x_tokens.iter().zip(export.row_argmax()) {
        writeln!(out, "  {t:<16} -> {}", export.y_tokens[j])?;
    }
    writeln!(out, "wrote {} and {}", csv.display(), svg.display())?;
    Ok((export, csv, svg))
}

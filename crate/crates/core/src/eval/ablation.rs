use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{evaluate, EvalReport};
use crate::embeddings::{EmbeddingTable, Vocabulary};
use crate::error::Result;
use crate::model::{Asim, AsimConfig, Variant};
use crate::text::Example;
use crate::train::{train, TrainConfig};

/// Splits used by [`run_ablation`]; reports come from `test` when given,
/// otherwise from `val`.
#[derive(Debug, Clone, Copy)]
pub struct AblationData<'a> {
    pub train: &'a [Example],
    pub val: &'a [Example],
    pub test: Option<&'a [Example]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: Variant,
    pub label: String,
    pub best_epoch: Option<usize>,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn micro_f1(&self, variant: Variant) -> Option<f64> {
        self.rows.iter().find(|r| r.variant == variant).map(|r| r.report.micro_f1)
    }

    /// Per-class F1 and micro-F1, one row per configuration.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let Some(first) = self.rows.first() else {
            return s;
        };
        let _ = write!(s, "{:<22}", "Model/Classes");
        for m in &first.report.per_class {
            let _ = write!(s, "{:>14}", m.label);
        }
        let _ = writeln!(s, "{:>10}", "Micro-F1");
        for row in &self.rows {
            let _ = write!(s, "{:<22}", row.label);
            for m in &row.report.per_class {
                let _ = write!(s, "{:>14.4}", m.f1);
            }
            let _ = writeln!(s, "{:>10.4}", row.report.micro_f1);
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serializes")
    }
}

/// Trains and evaluates the baseline and each requested variant with the
/// same seeds and training settings. The baseline row always comes first.
pub fn run_ablation(
    data: AblationData<'_>,
    base: &AsimConfig,
    table: &EmbeddingTable,
    vocab: &Vocabulary,
    train_cfg: &TrainConfig,
    model_seed: u64,
    variants: &[Variant],
) -> Result<AblationTable> {
    let mut plan = vec![Variant::Full];
    plan.extend(variants.iter().copied().filter(|&v| v != Variant::Full));
    let task = Variant::Full.apply(base).task();
    let mut rows = Vec::with_capacity(plan.len());
    for variant in plan {
        log::info!("ablation: training {}", variant.label());
        let cfg = variant.apply(base);
        let model = Asim::new(cfg, table, model_seed)?;
        let mut tcfg = train_cfg.clone();
        if let Some(dir) = &train_cfg.checkpoint_dir {
            tcfg.checkpoint_dir = Some(dir.join(format!("{variant:?}").to_lowercase()));
        }
        tcfg.log_path = None;
        let outcome = train(model, vocab, data.train, data.val, &tcfg)?;
        let report = evaluate(&outcome.selected().model, data.test.unwrap_or(data.val), task)?;
        rows.push(AblationRow {
            variant,
            label: variant.label().to_string(),
            best_epoch: outcome.best.as_ref().map(|b| b.1),
            report,
        });
    }
    Ok(AblationTable { rows })
}

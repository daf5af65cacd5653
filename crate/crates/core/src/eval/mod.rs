//! Metrics, model evaluation and the ablation harness.

pub mod ablation;
pub mod metrics;

use rayon::prelude::*;

pub use ablation::{run_ablation, AblationData, AblationRow, AblationTable};
pub use metrics::{confusion, f1_score, metrics, ClassMetrics, ConfusionMatrix, EvalReport};

use crate::error::{Error, Result};
use crate::model::{Asim, Mode};
use crate::task::Task;
use crate::text::Example;

/// Eval-mode predictions (argmax class) for every example, in input order.
pub fn predict_all(model: &Asim, examples: &[Example]) -> Result<Vec<usize>> {
    examples
        .par_iter()
        .map(|ex| {
            model
                .forward(&ex.x, &ex.y, Mode::Eval)
                .map(|t| t.predicted())
                .map_err(|e| e.with_context(format!("pair {}", ex.pair_id)))
        })
        .collect()
}

/// Confusion matrix of `model` over `examples`.
pub fn confusion_of(model: &Asim, examples: &[Example]) -> Result<ConfusionMatrix> {
    let preds = predict_all(model, examples)?;
    let labels: Vec<usize> = examples.iter().map(|e| e.label).collect();
    confusion(&preds, &labels, model.config.num_classes)
}

/// Full report for `model` on a split labelled under `task`.
pub fn evaluate(model: &Asim, examples: &[Example], task: Task) -> Result<EvalReport> {
    if model.config.num_classes != task.num_classes() {
        return Err(Error::Config(format!(
            "model predicts {} classes but the {task} task has {}",
            model.config.num_classes,
            task.num_classes()
        )));
    }
    if let Some(ex) = examples.iter().find(|e| e.label >= task.num_classes()) {
        return Err(Error::Data(format!("pair {} has label {} outside the {task} task", ex.pair_id, ex.label)));
    }
    metrics(&confusion_of(model, examples)?)
}

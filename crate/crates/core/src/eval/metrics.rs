use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::task::Task;

/// Counts indexed `[true class][predicted class]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        ConfusionMatrix {
            counts: vec![vec![0; classes]; classes],
        }
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn add(&mut self, truth: usize, predicted: usize) {
        self.counts[truth][predicted] += 1;
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for (row, orow) in self.counts.iter_mut().zip(&other.counts) {
            for (c, o) in row.iter_mut().zip(orow) {
                *c += o;
            }
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..self.classes()).map(|i| self.counts[i][i]).sum()
    }

    fn column(&self, j: usize) -> u64 {
        self.counts.iter().map(|row| row[j]).sum()
    }
}

/// Tallies predictions against labels over `classes` classes.
pub fn confusion(preds: &[usize], labels: &[usize], classes: usize) -> Result<ConfusionMatrix> {
    if preds.len() != labels.len() {
        return Err(Error::Usage(format!(
            "{} predictions for {} labels",
            preds.len(),
            labels.len()
        )));
    }
    let mut cm = ConfusionMatrix::new(classes);
    for (&p, &l) in preds.iter().zip(labels) {
        if p >= classes || l >= classes {
            return Err(Error::Usage(format!("class index out of range for {classes} classes")));
        }
        cm.add(l, p);
    }
    Ok(cm)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Number of true instances.
    pub support: u64,
    /// Number of times the class was predicted.
    pub predicted: u64,
    /// Set when a precision or recall denominator was zero and 0 was used.
    pub zero_denominator: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_class: Vec<ClassMetrics>,
    /// Unweighted mean of per-class precision.
    pub macro_precision: f64,
    /// Unweighted mean of per-class recall.
    pub macro_recall: f64,
    pub macro_f1: f64,
    /// `2TP / (2TP + FP + FN)` with counts pooled over classes.
    pub micro_f1: f64,
    pub accuracy: f64,
    pub total: u64,
    pub confusion: ConfusionMatrix,
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

/// Harmonic mean of precision and recall, 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

fn class_labels(classes: usize) -> Vec<String> {
    match Task::from_num_classes(classes) {
        Some(t) => t.labels().iter().map(|s| s.to_string()).collect(),
        None => (0..classes).map(|i| format!("class{i}")).collect(),
    }
}

pub fn metrics(cm: &ConfusionMatrix) -> Result<EvalReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::Usage("metrics of an empty confusion matrix".into()));
    }
    let labels = class_labels(cm.classes());
    let per_class: Vec<ClassMetrics> = (0..cm.classes())
        .map(|i| {
            let tp = cm.counts[i][i];
            let predicted = cm.column(i);
            let support: u64 = cm.counts[i].iter().sum();
            let (precision, zp) = ratio(tp, predicted);
            let (recall, zr) = ratio(tp, support);
            ClassMetrics {
                label: labels[i].clone(),
                precision,
                recall,
                f1: f1_score(precision, recall),
                support,
                predicted,
                zero_denominator: zp || zr,
            }
        })
        .collect();
    let c = per_class.len() as f64;
    let macro_precision = per_class.iter().map(|m| m.precision).sum::<f64>() / c;
    let macro_recall = per_class.iter().map(|m| m.recall).sum::<f64>() / c;
    let macro_f1 = per_class.iter().map(|m| m.f1).sum::<f64>() / c;
    let tp = cm.correct();
    let errors = total - tp;
    // Every error is one false positive (for the predicted class) and one
    // false negative (for the true class).
    let micro_f1 = (2 * tp) as f64 / (2 * tp + errors + errors) as f64;
    Ok(EvalReport {
        per_class,
        macro_precision,
        macro_recall,
        macro_f1,
        micro_f1,
        accuracy: tp as f64 / total as f64,
        total,
        confusion: cm.clone(),
    })
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Per-class F1 table followed by the headline numbers and the matrix.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut header = format!("{:<16}", "Model/Classes");
        for m in &self.per_class {
            let _ = write!(header, "{:>14}", m.label);
        }
        let _ = writeln!(s, "{header}{:>10}", "Micro-F1");
        let mut row = format!("{:<16}", "ASIM");
        for m in &self.per_class {
            let _ = write!(row, "{:>14.4}", m.f1);
        }
        let _ = writeln!(s, "{row}{:>10.4}", self.micro_f1);
        let _ = writeln!(s);
        let _ = writeln!(s, "{:<16}{:>10}{:>10}{:>10}{:>10}", "class", "precision", "recall", "f1", "support");
        for m in &self.per_class {
            let flag = if m.zero_denominator { " *" } else { "" };
            let _ = writeln!(
                s,
                "{:<16}{:>10.4}{:>10.4}{:>10.4}{:>10}{flag}",
                m.label, m.precision, m.recall, m.f1, m.support
            );
        }
        let _ = writeln!(
            s,
            "{:<16}{:>10.4}{:>10.4}{:>10.4}{:>10}",
            "macro", self.macro_precision, self.macro_recall, self.macro_f1, self.total
        );
        let _ = writeln!(s, "micro-F1 {:.4}  accuracy {:.4}", self.micro_f1, self.accuracy);
        if self.per_class.iter().any(|m| m.zero_denominator) {
            let _ = writeln!(s, "* zero denominator; value reported as 0");
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "confusion (rows = true, columns = predicted)");
        for (m, row) in self.per_class.iter().zip(&self.confusion.counts) {
            let cells: Vec<String> = row.iter().map(|c| format!("{c:>8}")).collect();
            let _ = writeln!(s, "{:<16}{}", m.label, cells.join(""));
        }
        s
    }
}

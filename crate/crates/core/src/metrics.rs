//! Confusion matrices, per-class and macro-averaged precision/recall/F1, and
//! the federated-vs-centralized improvement table.
//!
//! Macro averages are unweighted means over classes present in the truth
//! labels (row sum > 0); 0/0 ratios are defined as 0 so absent predictions
//! never poison the averages. Both macro and weighted averages are computed;
//! macro is the headline number.

use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Per-class precision, recall, F1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassPrf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Full evaluation summary for one model on one test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Rows = true class, columns = predicted class.
    pub confusion: Vec<Vec<u64>>,
    pub per_class: Vec<ClassPrf>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub weighted_precision: f64,
    pub weighted_recall: f64,
    pub weighted_f1: f64,
}

/// Count (truth, predicted) pairs into a K x K matrix.
pub fn confusion_matrix(
    truth: &[usize],
    predicted: &[usize],
    num_classes: usize,
) -> Result<Vec<Vec<u64>>> {
    if truth.len() != predicted.len() {
        return Err(Error::Shape(format!(
            "truth has {} labels, predictions have {}",
            truth.len(),
            predicted.len()
        )));
    }
    let mut counts = vec![vec![0u64; num_classes]; num_classes];
    for (&t, &p) in truth.iter().zip(predicted) {
        for label in [t, p] {
            if label >= num_classes {
                return Err(Error::LabelOutOfRange { label, num_classes });
            }
        }
        counts[t][p] += 1;
    }
    Ok(counts)
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Derive per-class and averaged metrics from a confusion matrix.
pub fn precision_recall_f1(confusion: &[Vec<u64>]) -> Metrics {
    let k = confusion.len();
    let mut per_class = Vec::with_capacity(k);
    let mut row_sums = vec![0u64; k];
    let mut col_sums = vec![0u64; k];
    for (t, row) in confusion.iter().enumerate() {
        for (p, &c) in row.iter().enumerate() {
            row_sums[t] += c;
            col_sums[p] += c;
        }
    }
    for c in 0..k {
        let diag = confusion[c][c] as f64;
        let precision = ratio(diag, col_sums[c] as f64);
        let recall = ratio(diag, row_sums[c] as f64);
        let f1 = ratio(2.0 * precision * recall, precision + recall);
        per_class.push(ClassPrf {
            precision,
            recall,
            f1,
        });
    }

    let present: Vec<usize> = (0..k).filter(|&c| row_sums[c] > 0).collect();
    let mean = |f: fn(&ClassPrf) -> f64| {
        if present.is_empty() {
            0.0
        } else {
            present.iter().map(|&c| f(&per_class[c])).sum::<f64>() / present.len() as f64
        }
    };
    let total: u64 = row_sums.iter().sum();
    let wmean = |f: fn(&ClassPrf) -> f64| {
        if total == 0 {
            0.0
        } else {
            present
                .iter()
                .map(|&c| f(&per_class[c]) * row_sums[c] as f64)
                .sum::<f64>()
                / total as f64
        }
    };

    Metrics {
        macro_precision: mean(|m| m.precision),
        macro_recall: mean(|m| m.recall),
        macro_f1: mean(|m| m.f1),
        weighted_precision: wmean(|m| m.precision),
        weighted_recall: wmean(|m| m.recall),
        weighted_f1: wmean(|m| m.f1),
        per_class,
        confusion: confusion.to_vec(),
    }
}

/// Convenience: confusion matrix plus derived metrics in one call.
pub fn evaluate_predictions(
    truth: &[usize],
    predicted: &[usize],
    num_classes: usize,
) -> Result<Metrics> {
    Ok(precision_recall_f1(&confusion_matrix(
        truth,
        predicted,
        num_classes,
    )?))
}

/// Summary triple used where full confusion matrices are not needed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacroSummary {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl MacroSummary {
    pub fn of(m: &Metrics) -> Self {
        Self {
            precision: m.macro_precision,
            recall: m.macro_recall,
            f1: m.macro_f1,
        }
    }
}

/// Macro precision/recall/F1 deltas, federated minus centralized, in
/// percentage points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImprovementRow {
    pub strategy: String,
    pub precision_pp: f64,
    pub recall_pp: f64,
    pub f1_pp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImprovementTable {
    pub rows: Vec<ImprovementRow>,
}

/// Percentage-point deltas per strategy against a centralized baseline.
pub fn improvement_table(
    centralized: &MacroSummary,
    federated: &[(String, MacroSummary)],
) -> ImprovementTable {
    let pp = |f: f64, c: f64| (f - c) * 100.0;
    let rows = federated
        .iter()
        .map(|(name, m)| ImprovementRow {
            strategy: name.clone(),
            precision_pp: pp(m.precision, centralized.precision),
            recall_pp: pp(m.recall, centralized.recall),
            f1_pp: pp(m.f1, centralized.f1),
        })
        .collect();
    ImprovementTable { rows }
}

/// Fixed-width text rendering of an improvement table, two decimals,
/// metric rows by strategy columns.
pub fn render_improvement_table(title: &str, table: &ImprovementTable) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{title}");
    let width = table
        .rows
        .iter()
        .map(|r| r.strategy.len())
        .max()
        .unwrap_or(8)
        .max(9);
    let _ = write!(out, "{:<10}", "Metrics");
    for r in &table.rows {
        let _ = write!(out, "  {:>width$}", r.strategy);
    }
    out.push('\n');
    type Get = fn(&ImprovementRow) -> f64;
    let rows: [(&str, Get); 3] = [
        ("Precision", |r| r.precision_pp),
        ("Recall", |r| r.recall_pp),
        ("F1", |r| r.f1_pp),
    ];
    for (label, get) in rows {
        let _ = write!(out, "{label:<10}");
        for r in &table.rows {
            let _ = write!(out, "  {:>width$}", format!("{:+.2}", get(r)));
        }
        out.push('\n');
    }
    out
}

//! Fixed-width table rendering and output files.
//!
//! Result JSON and ledger files carry only deterministic content; wall-clock
//! timings go to a sidecar so two runs with the same seed write identical
//! result bytes.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::metrics::render_improvement_table;

use super::run::result_filename;
use super::{ExperimentResult, SweepResult};

fn pct(v: f64) -> String {
    format!("{:.2}%", v * 100.0)
}

const METRIC_ROWS: [&str; 3] = ["Precision", "Recall", "F1"];

/// Render a single experiment's mean metrics, one column.
pub fn render_experiment_table(result: &ExperimentResult) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "RESULTS: {} {} (hidden units {}, seed {})",
        result.mode.to_uppercase(),
        result.strategy,
        result.hidden_units,
        result.experiment_seed
    );
    let _ = writeln!(out, "{:<10}  {:>12}", "Metrics", result.strategy);
    let values = [
        result.mean.precision,
        result.mean.recall,
        result.mean.f1,
    ];
    for (label, v) in METRIC_ROWS.iter().zip(values) {
        let _ = writeln!(out, "{label:<10}  {:>12}", pct(v));
    }
    out
}

/// Render the sweep in the comparison-table layout: per hidden-units block,
/// metric rows by centralized + strategy columns, then the averaged
/// improvement table.
pub fn render_sweep_tables(sweep: &SweepResult) -> String {
    let dataset = match &sweep.config.dataset {
        super::DatasetSpec::Synthetic { .. } => "synthetic".to_string(),
        super::DatasetSpec::Csv { path, .. } => Path::new(path)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "csv".to_string()),
    };
    let mut out = String::new();
    let _ = writeln!(
        out,
        "COMPARISON OF FEDERATED LEARNING WITH CENTRALIZED TRAINING ON {}",
        dataset.to_uppercase()
    );
    let col = sweep
        .strategies
        .iter()
        .map(|s| s.len())
        .max()
        .unwrap_or(8)
        .max(11);
    let _ = write!(out, "{:<10}  {:>6}  {:<10}", "Dataset", "Hidden", "Metrics");
    let _ = write!(out, "  {:>col$}", "Centralized");
    for s in &sweep.strategies {
        let _ = write!(out, "  {:>col$}", s);
    }
    out.push('\n');
    for (h_idx, &hidden) in sweep.hidden_units.iter().enumerate() {
        let baseline = &sweep.centralized[h_idx];
        for (m_idx, label) in METRIC_ROWS.iter().enumerate() {
            let ds = if h_idx == 0 && m_idx == 0 {
                dataset.as_str()
            } else {
                ""
            };
            let hid = if m_idx == 0 {
                hidden.to_string()
            } else {
                String::new()
            };
            let _ = write!(out, "{ds:<10}  {hid:>6}  {label:<10}");
            let base_vals = [
                baseline.mean.precision,
                baseline.mean.recall,
                baseline.mean.f1,
            ];
            let _ = write!(out, "  {:>col$}", pct(base_vals[m_idx]));
            for s in &sweep.strategies {
                let cell = sweep
                    .cells
                    .iter()
                    .find(|c| c.hidden_units == hidden && &c.strategy == s);
                let text = match cell.and_then(|c| c.federated.as_ref()) {
                    Some(fed) => {
                        let vals = [fed.mean.precision, fed.mean.recall, fed.mean.f1];
                        pct(vals[m_idx])
                    }
                    None => "failed".to_string(),
                };
                let _ = write!(out, "  {text:>col$}");
            }
            out.push('\n');
        }
    }
    out.push('\n');
    out.push_str(&render_improvement_table(
        "AVERAGE IMPROVEMENT OVER CENTRALIZED ACROSS HIDDEN UNITS (PERCENTAGE POINTS)",
        &sweep.mean_improvement,
    ));
    out
}

/// Write one experiment's result JSON, its ledger files, and a timing
/// sidecar into `out_dir`. Returns the written paths, result JSON first.
pub fn write_experiment(result: &ExperimentResult, out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    let result_path = out_dir.join(result_filename(result));
    std::fs::write(&result_path, serde_json::to_string_pretty(result)?)?;
    written.push(result_path);
    for (cell, ((_, _), chain)) in result
        .cells
        .iter()
        .filter(|c| c.ledger_file.is_some())
        .zip(&result.chains)
    {
        let path = out_dir.join(cell.ledger_file.as_ref().unwrap());
        chain.write_jsonl(&path)?;
        written.push(path);
    }
    let timing_path = out_dir.join(format!(
        "{}.timings.txt",
        written[0].file_stem().unwrap().to_string_lossy()
    ));
    std::fs::write(
        &timing_path,
        format!(
            "data_ms={}\ntrain_ms={}\neval_ms={}\n",
            result.timings.data_ms, result.timings.train_ms, result.timings.eval_ms
        ),
    )?;
    written.push(timing_path);
    Ok(written)
}

/// Write a sweep: the sweep JSON, rendered tables, and every constituent
/// experiment's files. Returns the written paths, sweep JSON first.
pub fn write_sweep(sweep: &SweepResult, out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    let sweep_path = out_dir.join(format!("sweep_seed{}.json", sweep.config.experiment_seed));
    std::fs::write(&sweep_path, serde_json::to_string_pretty(sweep)?)?;
    written.push(sweep_path);
    let tables_path = out_dir.join(format!("tables_seed{}.txt", sweep.config.experiment_seed));
    std::fs::write(&tables_path, render_sweep_tables(sweep))?;
    written.push(tables_path);
    for result in &sweep.centralized {
        written.extend(write_experiment(result, out_dir)?);
    }
    for cell in &sweep.cells {
        if let Some(result) = &cell.federated {
            written.extend(write_experiment(result, out_dir)?);
        }
    }
    Ok(written)
}

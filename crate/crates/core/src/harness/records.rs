//! Per-epoch metric records, run summaries and their on-disk forms.
//!
//! A run directory holds `metrics.jsonl` (one [`EpochRecord`] per line),
//! `summary.json` / `summary.csv`, `config.txt` and `checkpoint.bin`.
//! Lottery-ticket runs add `pretrain.jsonl` for the dense phase.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::config::Method;

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const PRETRAIN_FILE: &str = "pretrain.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const CONFIG_FILE: &str = "config.txt";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";

/// Metrics after one epoch. Carries no method name, so runs that train
/// identically log identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based epoch that just finished.
    pub epoch: usize,
    /// Optimizer steps so far.
    pub iteration: u64,
    pub lr: f64,
    /// Prune rate of the most recent connectivity update (0 if none yet).
    pub prune_rate: f64,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: Option<f64>,
    pub val_acc: Option<f64>,
    pub test_loss: f64,
    pub test_acc: f64,
    pub rs: f64,
    pub layer_rs: Vec<f64>,
    pub active: usize,
    pub updates: u64,
    pub gen_error: f64,
}

/// Final numbers of one run. Test accuracy is reported both at the epoch of
/// minimum validation loss and at the last epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub method: Method,
    pub sparsity: f64,
    pub delta_t: Option<u64>,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub stop_exploration_epoch: Option<usize>,
    pub best_epoch: usize,
    pub best_val_loss: Option<f64>,
    pub best_val_test_acc: f64,
    pub final_test_acc: f64,
    pub final_train_acc: f64,
    pub final_gen_error: f64,
    pub rs: f64,
    pub updates: u64,
    pub active: usize,
    pub dense_size: usize,
    pub warnings: Vec<String>,
}

/// Everything one run produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub epochs: Vec<EpochRecord>,
    pub summary: RunSummary,
}

impl RunRecord {
    pub fn rs_curve(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.rs).collect()
    }
}

/// Epoch with the minimum validation loss (earliest on ties); the last
/// epoch when there is no validation split.
pub fn best_val_epoch(records: &[EpochRecord]) -> Option<&EpochRecord> {
    let mut best: Option<&EpochRecord> = None;
    for r in records {
        let Some(v) = r.val_loss else {
            return records.last();
        };
        if best.is_none_or(|b| v < b.val_loss.expect("checked")) {
            best = Some(r);
        }
    }
    best
}

pub fn jsonl_line(record: &EpochRecord) -> String {
    let mut s = serde_json::to_string(record).expect("records serialize");
    s.push('\n');
    s
}

/// Parses a metrics stream; a malformed line is a format error carrying its
/// byte offset and the file name.
pub fn read_jsonl(path: &Path) -> Result<Vec<EpochRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut offset = 0u64;
    let mut out = Vec::new();
    for (n, line) in text.split_inclusive('\n').enumerate() {
        if !line.trim().is_empty() {
            let rec = serde_json::from_str(line).map_err(|e| {
                Error::format(offset, format!("{}: line {}: {e}", path.display(), n + 1))
            })?;
            out.push(rec);
        }
        offset += line.len() as u64;
    }
    Ok(out)
}

pub fn write_json<V: Serialize>(path: &Path, value: &V) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("values serialize");
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_summary(path: &Path) -> Result<RunSummary> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(0, format!("{}: {e}", path.display())))
}

/// Single-row CSV form of a summary.
pub fn write_summary_csv(path: &Path, s: &RunSummary) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let opt = |v: Option<String>| v.unwrap_or_default();
    w.write_record([
        "method",
        "sparsity",
        "delta_t",
        "batch_size",
        "epochs",
        "seed",
        "best_epoch",
        "best_val_loss",
        "best_val_test_acc",
        "final_test_acc",
        "final_train_acc",
        "final_gen_error",
        "rs",
        "updates",
        "active",
        "dense_size",
    ])
    .and_then(|_| {
        w.write_record([
            s.method.to_string(),
            s.sparsity.to_string(),
            s.delta_t.map_or_else(|| "inf".into(), |d| d.to_string()),
            s.batch_size.to_string(),
            s.epochs.to_string(),
            s.seed.to_string(),
            s.best_epoch.to_string(),
            opt(s.best_val_loss.map(|v| v.to_string())),
            s.best_val_test_acc.to_string(),
            s.final_test_acc.to_string(),
            s.final_train_acc.to_string(),
            s.final_gen_error.to_string(),
            s.rs.to_string(),
            s.updates.to_string(),
            s.active.to_string(),
            s.dense_size.to_string(),
        ])
    })
    .and_then(|_| w.flush().map_err(csv::Error::from))
    .map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

/// Appends pre-rendered lines to a file, creating it if needed.
pub fn append_lines(path: &Path, text: &str) -> Result<()> {
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(epoch: usize, val: Option<f64>) -> EpochRecord {
        EpochRecord {
            epoch,
            iteration: epoch as u64 * 10,
            lr: 0.1,
            prune_rate: 0.0,
            train_loss: 1.0,
            train_acc: 0.5,
            val_loss: val,
            val_acc: val.map(|_| 0.5),
            test_loss: 1.0,
            test_acc: epoch as f64 / 10.0,
            rs: 0.1,
            layer_rs: vec![0.1],
            active: 3,
            updates: 0,
            gen_error: 0.0,
        }
    }

    #[test]
    fn best_val_prefers_earliest_minimum() {
        let r = vec![rec(1, Some(0.5)), rec(2, Some(0.3)), rec(3, Some(0.3)), rec(4, Some(0.4))];
        assert_eq!(best_val_epoch(&r).unwrap().epoch, 2);
        let r = vec![rec(1, None), rec(2, None)];
        assert_eq!(best_val_epoch(&r).unwrap().epoch, 2);
    }

    #[test]
    fn jsonl_roundtrip_is_exact() {
        let mut r = rec(3, Some(0.1 + 0.2));
        r.train_loss = std::f64::consts::PI / 7.0;
        let back: EpochRecord = serde_json::from_str(jsonl_line(&r).trim()).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.train_loss.to_bits(), r.train_loss.to_bits());
    }
}

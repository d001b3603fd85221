//! Plot-ready CSV tables from run directories.
//!
//! `tidy.csv` has one row per (run, epoch, metric); `aggregate.csv` groups
//! the seeds of otherwise identical runs; `runs.csv` holds one summary row
//! per run.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::harness::records::{read_jsonl, read_summary, EpochRecord, RunSummary, METRICS_FILE, SUMMARY_FILE};
use crate::harness::sweep::{find_runs, mean_std};

pub const TIDY_FILE: &str = "tidy.csv";
pub const AGGREGATE_FILE: &str = "aggregate.csv";
pub const RUNS_FILE: &str = "runs.csv";

pub const TIDY_HEADER: [&str; 8] = ["method", "sparsity", "delta_t", "batch_size", "seed", "epoch", "metric", "value"];
pub const AGGREGATE_HEADER: [&str; 10] = [
    "method",
    "sparsity",
    "delta_t",
    "batch_size",
    "epochs",
    "epoch",
    "metric",
    "n",
    "mean",
    "std",
];

/// Scalar metrics of every epoch record; per-layer R_s follows as `rs_l{i}`.
pub const METRICS: [&str; 11] = [
    "train_loss",
    "train_acc",
    "val_loss",
    "val_acc",
    "test_loss",
    "test_acc",
    "rs",
    "lr",
    "prune_rate",
    "gen_error",
    "active",
];

/// A run directory's contents.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedRun {
    pub dir: PathBuf,
    pub summary: RunSummary,
    pub epochs: Vec<EpochRecord>,
}

pub fn load_run(dir: &Path) -> Result<LoadedRun> {
    let summary = read_summary(&dir.join(SUMMARY_FILE))?;
    let metrics = dir.join(METRICS_FILE);
    let epochs = read_jsonl(&metrics)?;
    if epochs.len() != summary.epochs {
        return Err(Error::Data(format!(
            "{}: {} records, summary says {} epochs",
            metrics.display(),
            epochs.len(),
            summary.epochs
        )));
    }
    if let Some(bad) = epochs.windows(2).find(|w| w[0].layer_rs.len() != w[1].layer_rs.len()) {
        return Err(Error::Data(format!(
            "{}: layer count changes at epoch {}",
            metrics.display(),
            bad[1].epoch
        )));
    }
    Ok(LoadedRun {
        dir: dir.to_path_buf(),
        summary,
        epochs,
    })
}

pub fn load_runs(root: &Path) -> Result<Vec<LoadedRun>> {
    find_runs(root)?.iter().map(|d| load_run(d)).collect()
}

/// Metric name/value pairs of one record; missing values are `None`.
pub fn metric_values(r: &EpochRecord) -> Vec<(String, Option<f64>)> {
    let mut v: Vec<(String, Option<f64>)> = vec![
        ("train_loss".into(), Some(r.train_loss)),
        ("train_acc".into(), Some(r.train_acc)),
        ("val_loss".into(), r.val_loss),
        ("val_acc".into(), r.val_acc),
        ("test_loss".into(), Some(r.test_loss)),
        ("test_acc".into(), Some(r.test_acc)),
        ("rs".into(), Some(r.rs)),
        ("lr".into(), Some(r.lr)),
        ("prune_rate".into(), Some(r.prune_rate)),
        ("gen_error".into(), Some(r.gen_error)),
        ("active".into(), Some(r.active as f64)),
    ];
    v.extend(r.layer_rs.iter().enumerate().map(|(i, &x)| (format!("rs_l{i}"), Some(x))));
    v
}

fn dt_text(d: Option<u64>) -> String {
    d.map_or_else(|| "inf".into(), |d| d.to_string())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Data(format!("{}: {e}", path.display()))
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| csv_err(path, e))
}

/// Writes `tidy.csv`, `aggregate.csv` and `runs.csv` under `out` for every
/// run found below `input`. Returns the number of runs.
pub fn report(input: &Path, out: &Path) -> Result<usize> {
    let runs = load_runs(input)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_tidy(&runs, &out.join(TIDY_FILE))?;
    write_aggregate(&runs, &out.join(AGGREGATE_FILE))?;
    write_runs(&runs, &out.join(RUNS_FILE))?;
    Ok(runs.len())
}

pub fn write_tidy(runs: &[LoadedRun], path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(TIDY_HEADER).map_err(|e| csv_err(path, e))?;
    for run in runs {
        let s = &run.summary;
        for r in &run.epochs {
            for (metric, value) in metric_values(r) {
                w.write_record([
                    s.method.to_string(),
                    s.sparsity.to_string(),
                    dt_text(s.delta_t),
                    s.batch_size.to_string(),
                    s.seed.to_string(),
                    r.epoch.to_string(),
                    metric,
                    fmt_opt(value),
                ])
                .map_err(|e| csv_err(path, e))?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

type GroupKey = (String, u64, u64, usize, usize, Option<usize>, usize, String);

/// Seeds of runs that agree on every other setting are pooled; std is the
/// sample standard deviation (0 for a single run).
pub fn aggregate(runs: &[LoadedRun]) -> BTreeMap<GroupKey, Vec<f64>> {
    let mut groups: BTreeMap<GroupKey, Vec<f64>> = BTreeMap::new();
    for run in runs {
        let s = &run.summary;
        for r in &run.epochs {
            for (metric, value) in metric_values(r) {
                let Some(v) = value else { continue };
                groups
                    .entry((
                        s.method.to_string(),
                        s.sparsity.to_bits(),
                        s.delta_t.unwrap_or(u64::MAX),
                        s.batch_size,
                        s.epochs,
                        s.stop_exploration_epoch,
                        r.epoch,
                        metric,
                    ))
                    .or_default()
                    .push(v);
            }
        }
    }
    groups
}

pub fn write_aggregate(runs: &[LoadedRun], path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(AGGREGATE_HEADER).map_err(|e| csv_err(path, e))?;
    for ((method, sparsity, dt, batch, epochs, _, epoch, metric), values) in aggregate(runs) {
        let (mean, std) = mean_std(&values);
        w.write_record([
            method,
            f64::from_bits(sparsity).to_string(),
            dt_text((dt != u64::MAX).then_some(dt)),
            batch.to_string(),
            epochs.to_string(),
            epoch.to_string(),
            metric,
            values.len().to_string(),
            mean.to_string(),
            std.to_string(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_runs(runs: &[LoadedRun], path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record([
        "dir",
        "method",
        "sparsity",
        "delta_t",
        "batch_size",
        "epochs",
        "seed",
        "stop_exploration_epoch",
        "best_epoch",
        "best_val_test_acc",
        "final_test_acc",
        "final_gen_error",
        "rs",
        "updates",
    ])
    .map_err(|e| csv_err(path, e))?;
    for run in runs {
        let s = &run.summary;
        w.write_record([
            run.dir.display().to_string(),
            s.method.to_string(),
            s.sparsity.to_string(),
            dt_text(s.delta_t),
            s.batch_size.to_string(),
            s.epochs.to_string(),
            s.seed.to_string(),
            s.stop_exploration_epoch.map(|e| e.to_string()).unwrap_or_default(),
            s.best_epoch.to_string(),
            s.best_val_test_acc.to_string(),
            s.final_test_acc.to_string(),
            s.final_gen_error.to_string(),
            s.rs.to_string(),
            s.updates.to_string(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::{Method, TrainConfig};
    use crate::harness::run::{run_with, RunOptions};
    use crate::harness::data_spec::load_splits;

    #[test]
    fn tables_have_expected_rows() {
        let tmp = tempfile::tempdir().unwrap();
        let base = TrainConfig {
            method: Method::Set,
            dataset: "synth:classes=3,features=10,train_per_class=20,test_per_class=5".into(),
            hidden_widths: vec![6],
            epochs: 2,
            batch_size: 8,
            sparsity: 0.5,
            delta_t: Some(3),
            ..TrainConfig::default()
        };
        let data = load_splits(&base.dataset, base.val_fraction, base.data_seed).unwrap();
        // The same config twice under different directories: identical reruns.
        for name in ["a", "b"] {
            let mut cfg = base.clone();
            cfg.out_dir = tmp.path().join("runs").join(name);
            run_with(&cfg, &data, &RunOptions::persisted()).unwrap();
        }
        let out = tmp.path().join("report");
        assert_eq!(report(&tmp.path().join("runs"), &out).unwrap(), 2);
        let rows = |f: &str| {
            let mut r = csv::Reader::from_path(out.join(f)).unwrap();
            r.records().map(|x| x.unwrap()).collect::<Vec<_>>()
        };
        // 11 scalar metrics + 2 per-layer R_s, 2 epochs, 2 runs.
        assert_eq!(rows(TIDY_FILE).len(), 13 * 2 * 2);
        let agg = rows(AGGREGATE_FILE);
        assert_eq!(agg.len(), 13 * 2);
        assert!(agg.iter().all(|r| &r[7] == "2" && r[9].parse::<f64>().unwrap() == 0.0));
        assert_eq!(rows(RUNS_FILE).len(), 2);
    }

    #[test]
    fn truncated_metrics_are_rejected() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = TrainConfig {
            dataset: "synth:classes=2,features=4,train_per_class=10,test_per_class=5".into(),
            hidden_widths: vec![3],
            epochs: 2,
            batch_size: 4,
            sparsity: 0.5,
            out_dir: tmp.path().join("r"),
            ..TrainConfig::default()
        };
        let data = load_splits(&cfg.dataset, cfg.val_fraction, cfg.data_seed).unwrap();
        run_with(&cfg, &data, &RunOptions::persisted()).unwrap();
        let metrics = cfg.out_dir.join(METRICS_FILE);
        let text = std::fs::read_to_string(&metrics).unwrap();
        std::fs::write(&metrics, text.lines().next().unwrap()).unwrap();
        assert!(matches!(load_run(&cfg.out_dir), Err(Error::Data(_))));
        std::fs::write(&metrics, "{\"epoch\": oops}\n").unwrap();
        assert!(matches!(load_run(&cfg.out_dir), Err(Error::Format { .. })));
    }
}

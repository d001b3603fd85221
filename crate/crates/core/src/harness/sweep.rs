//! Grid sweeps over [`TrainConfig`] fields and the threshold estimates
//! computed from their results.
//!
//! A grid file has one `key = v1, v2, ...` line per swept field (use `;`
//! between values that themselves contain commas). Cells are the cartesian
//! product in file order, last key varying fastest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::config::{Method, TrainConfig};
use crate::harness::data_spec::{load_splits, DataSplits};
use crate::harness::records::{write_json, RunRecord, RunSummary};
use crate::harness::run::{run_with, thread_count, RunOptions};

pub const HYPOTHESIS_FILE: &str = "hypothesis.json";

/// Swept keys and their values, in file order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Grid {
    pub axes: Vec<(String, Vec<String>)>,
}

impl Grid {
    pub fn parse(text: &str) -> Result<Self> {
        let mut axes: Vec<(String, Vec<String>)> = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("grid line {}: expected key = values", n + 1)))?;
            let k = k.trim().to_string();
            if !crate::harness::config::KEYS.contains(&k.as_str()) || k == "out_dir" {
                return Err(Error::config(format!("grid line {}: cannot sweep {k:?}", n + 1)));
            }
            if axes.iter().any(|(a, _)| *a == k) {
                return Err(Error::config(format!("grid line {}: {k} listed twice", n + 1)));
            }
            let sep = if v.contains(';') { ';' } else { ',' };
            let values: Vec<String> = v.split(sep).map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
            if values.is_empty() {
                return Err(Error::config(format!("grid line {}: no values", n + 1)));
            }
            axes.push((k, values));
        }
        Ok(Grid { axes })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|(_, v)| v.len()).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every cell as (key, value) assignments.
    pub fn cells(&self) -> Vec<Vec<(String, String)>> {
        let mut cells = vec![Vec::new()];
        for (k, values) in &self.axes {
            cells = cells
                .into_iter()
                .flat_map(|c| {
                    values.iter().map(move |v| {
                        let mut c = c.clone();
                        c.push((k.clone(), v.clone()));
                        c
                    })
                })
                .collect();
        }
        cells
    }
}

fn cell_name(cell: &[(String, String)]) -> String {
    if cell.is_empty() {
        return "run".into();
    }
    cell.iter()
        .map(|(k, v)| {
            let v: String = v
                .chars()
                .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' })
                .collect();
            format!("{k}-{v}")
        })
        .collect::<Vec<_>>()
        .join("_")
}

/// Outcome of one grid cell.
#[derive(Debug)]
pub struct CellResult {
    pub name: String,
    pub config: TrainConfig,
    pub record: Result<RunRecord>,
}

#[derive(Debug)]
pub struct SweepResult {
    pub cells: Vec<CellResult>,
    pub report: HypothesisReport,
}

/// Builds the per-cell configs; each writes to `base.out_dir/<cell name>`.
pub fn expand(base: &TrainConfig, grid: &Grid) -> Result<Vec<(String, TrainConfig)>> {
    grid.cells()
        .into_iter()
        .map(|cell| {
            let mut cfg = base.clone();
            for (k, v) in &cell {
                cfg.set(k, v)?;
            }
            let name = cell_name(&cell);
            cfg.out_dir = base.out_dir.join(&name);
            cfg.validate().map_err(|e| Error::config(format!("cell {name}: {e}")))?;
            Ok((name, cfg))
        })
        .collect()
}

/// Runs every cell of `grid` on top of `base`. Cells run as whole runs in
/// parallel when more than one thread is configured. Failed cells are kept
/// with their error; the report uses the completed ones.
pub fn sweep(base: &TrainConfig, grid: &Grid, persist: bool) -> Result<SweepResult> {
    let cells = expand(base, grid)?;
    let mut datasets: BTreeMap<(String, u64, u64), DataSplits> = BTreeMap::new();
    for (_, cfg) in &cells {
        let key = (cfg.dataset.clone(), cfg.val_fraction.to_bits(), cfg.data_seed);
        if !datasets.contains_key(&key) {
            datasets.insert(key, load_splits(&cfg.dataset, cfg.val_fraction, cfg.data_seed)?);
        }
    }
    let opts = RunOptions {
        persist,
        ..Default::default()
    };
    let exec = |(name, cfg): (String, TrainConfig)| {
        let data = &datasets[&(cfg.dataset.clone(), cfg.val_fraction.to_bits(), cfg.data_seed)];
        log::info!("sweep cell {name}");
        let record = run_with(&cfg, data, &opts)
            .and_then(|o| o.map(|o| o.main).ok_or_else(|| Error::State("run halted".into())));
        if let Err(e) = &record {
            log::warn!("cell {name} failed: {e}");
        }
        CellResult {
            name,
            config: cfg,
            record,
        }
    };
    let results: Vec<CellResult> = if thread_count() > 1 {
        cells.into_par_iter().map(exec).collect()
    } else {
        cells.into_iter().map(exec).collect()
    };
    let failed = results.iter().filter(|c| c.record.is_err()).count();
    if failed > 0 {
        log::warn!("{failed} of {} cells failed; aggregating the rest", results.len());
    }
    let summaries: Vec<RunSummary> = results
        .iter()
        .filter_map(|c| c.record.as_ref().ok().map(|r| r.summary.clone()))
        .collect();
    let report = hypothesis_report(&summaries, grid);
    if persist {
        std::fs::create_dir_all(&base.out_dir).map_err(|e| Error::io(&base.out_dir, e))?;
        write_json(&base.out_dir.join(HYPOTHESIS_FILE), &report)?;
        let failures: BTreeMap<&str, String> = results
            .iter()
            .filter_map(|c| c.record.as_ref().err().map(|e| (c.name.as_str(), e.to_string())))
            .collect();
        if !failures.is_empty() {
            write_json(&base.out_dir.join("failures.json"), &failures)?;
        }
    }
    Ok(SweepResult {
        cells: results,
        report,
    })
}

/// Sample mean and standard deviation (n - 1 denominator; 0 for one value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Smallest reliable update interval of one series (all cells equal except
/// ΔT and seed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalEstimate {
    pub method: Method,
    pub sparsity: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Mean accuracy per ΔT (`None` = never updated), ascending ΔT.
    pub delta_t: Vec<Option<u64>>,
    pub mean_acc: Vec<f64>,
    pub std_acc: Vec<f64>,
    pub peak_acc: f64,
    pub pooled_std: f64,
    /// Smallest ΔT whose mean accuracy is within one pooled std of the peak.
    pub t0: Option<u64>,
    pub seeds: usize,
}

/// Empirical thresholds of a sweep, with the data they rest on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    /// Mean best-validation test accuracy of the dense runs in the sweep.
    pub dense_acc: Option<f64>,
    pub intervals: Vec<IntervalEstimate>,
    /// Smallest R_s among non-dense runs whose accuracy reaches `dense_acc`.
    pub r0: Option<f64>,
    pub runs: usize,
    pub seeds: usize,
    pub grid: Vec<(String, Vec<String>)>,
}

fn dt_order(d: Option<u64>) -> u64 {
    d.unwrap_or(u64::MAX)
}

/// Computes the report from run summaries alone, so it can be recomputed
/// from stored files.
pub fn hypothesis_report(summaries: &[RunSummary], grid: &Grid) -> HypothesisReport {
    let dense: Vec<f64> = summaries
        .iter()
        .filter(|s| s.method == Method::Dense)
        .map(|s| s.best_val_test_acc)
        .collect();
    let dense_acc = (!dense.is_empty()).then(|| mean_std(&dense).0);
    type SeriesKey = (Method, u64, usize, usize, Option<usize>);
    let mut series: BTreeMap<SeriesKey, BTreeMap<u64, (Option<u64>, Vec<f64>)>> = BTreeMap::new();
    for s in summaries.iter().filter(|s| s.method != Method::Dense) {
        series
            .entry((s.method, s.sparsity.to_bits(), s.batch_size, s.epochs, s.stop_exploration_epoch))
            .or_default()
            .entry(dt_order(s.delta_t))
            .or_insert_with(|| (s.delta_t, Vec::new()))
            .1
            .push(s.best_val_test_acc);
    }
    let intervals = series
        .into_iter()
        .map(|((method, sparsity, batch_size, epochs, _), by_dt)| {
            let delta_t: Vec<Option<u64>> = by_dt.values().map(|(d, _)| *d).collect();
            let stats: Vec<(f64, f64)> = by_dt.values().map(|(_, a)| mean_std(a)).collect();
            let peak = stats.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
            let pooled = (stats.iter().map(|s| s.1 * s.1).sum::<f64>() / stats.len() as f64).sqrt();
            let t0 = delta_t
                .iter()
                .zip(&stats)
                .find(|(_, s)| s.0 >= peak - pooled)
                .and_then(|(d, _)| *d);
            IntervalEstimate {
                method,
                sparsity: f64::from_bits(sparsity),
                batch_size,
                epochs,
                mean_acc: stats.iter().map(|s| s.0).collect(),
                std_acc: stats.iter().map(|s| s.1).collect(),
                delta_t,
                peak_acc: peak,
                pooled_std: pooled,
                t0,
                seeds: by_dt.values().map(|(_, a)| a.len()).max().unwrap_or(0),
            }
        })
        .collect();
    let r0 = dense_acc.and_then(|a| {
        summaries
            .iter()
            .filter(|s| s.method != Method::Dense && s.best_val_test_acc >= a)
            .map(|s| s.rs)
            .min_by(f64::total_cmp)
    });
    let mut seeds: Vec<u64> = summaries.iter().map(|s| s.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    HypothesisReport {
        dense_acc,
        intervals,
        r0,
        runs: summaries.len(),
        seeds: seeds.len(),
        grid: grid.axes.clone(),
    }
}

/// Run directories (those holding a summary) below `root`, sorted.
pub fn find_runs(root: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        let entries = std::fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(&dir, e))?;
            let path = entry.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().is_some_and(|n| n == crate::harness::records::SUMMARY_FILE) {
                out.push(dir.clone());
            }
        }
    }
    out.sort();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_product_and_names() {
        let g = Grid::parse("delta_t = 1, inf\nseed = 1,2,3 # seeds\nhidden_widths = 8,4; 6\n").unwrap();
        assert_eq!(g.len(), 12);
        let cells = g.cells();
        assert_eq!(cells.len(), 12);
        assert_eq!(cells[0][2], ("hidden_widths".to_string(), "8,4".to_string()));
        assert_eq!(cell_name(&cells[1]), "delta_t-1_seed-1_hidden_widths-6");
        assert!(Grid::parse("nonsense = 1").is_err());
        assert!(Grid::parse("seed = 1\nseed = 2").is_err());
    }

    #[test]
    fn mean_std_sample() {
        assert_eq!(mean_std(&[2.0]), (2.0, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
    }
}

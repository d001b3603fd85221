//! Experiment front end: configuration, single runs, sweeps, reports and
//! the built-in oracle checks.

pub mod config;
pub mod data_spec;
pub mod records;
pub mod report;
mod run;
pub mod sweep;
pub mod verify;

pub use config::{EpochAnchor, Method, Precision, SparseInit, TrainConfig};
pub use data_spec::{load_splits, DataSpec, DataSplits};
pub use records::{EpochRecord, RunRecord, RunSummary};
pub use run::{
    evaluate, hybrid_init_dst, init_threads, initial_masks, lth_oneshot, run, run_in_memory, run_with, thread_count,
    widths_for, RunOptions, RunOutput, TRAINER_TAG,
};
pub use report::report;
pub use sweep::{hypothesis_report, sweep, Grid, HypothesisReport, SweepResult};

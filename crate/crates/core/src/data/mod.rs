//! Datasets, loaders and deterministic batching.

mod csv_import;
mod dataset;
pub mod idx;
mod synth;

pub use csv_import::{load_csv, read_csv};
pub use dataset::{batches, split, BatchPlan, Dataset, Split};
pub use idx::load_idx;
pub use synth::{synth_blobs, BlobSpec};

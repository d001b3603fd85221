//! Comparison methods that derive sparsity from a dense network: SNIP,
//! one-shot lottery tickets and gradual magnitude pruning. The full run
//! orchestrations live in [`crate::harness`] and share its training loop.

mod gmp;
mod lth;
mod snip;

pub use gmp::{gmp_sparsity, gmp_step, layer_targets, GmpSchedule};
pub use lth::{global_magnitude_masks, rewind};
pub use snip::{masks_from_scores, snip_prune, snip_scores, BatchStream, SnipScores};

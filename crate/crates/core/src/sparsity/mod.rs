//! Sparse initialization, pruning, regrowth and the periodic connectivity
//! update behind static, SET and RigL training.

mod alloc;
mod schedule;
mod topology;

pub use alloc::{
    allocate_er, allocate_erk, allocate_uniform, sample_mask, sample_mask_count, sample_masks,
    LayerShape, SparsityAllocation,
};
pub use schedule::{prune_rate, PruneGrowSchedule};
pub use topology::{
    apply_plan, apply_update, dst_step, grow_gradient, grow_random, prune_magnitude,
    validate_plan, DstMethod, DstParams, GrowthStrategy, LayerPlan, TopologyUpdatePlan,
};

use crate::error::{Error, Result};
use crate::ndcore::{topk_abs, Mask, Order, Scalar};
use crate::nn::Network;

/// Cubic sparsity ramp of gradual magnitude pruning, in (fractional) epochs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmpSchedule {
    pub start_epoch: f64,
    pub end_epoch: f64,
    pub final_sparsity: f64,
    pub update_every: u64,
}

impl GmpSchedule {
    pub fn new(start_epoch: f64, end_epoch: f64, final_sparsity: f64, update_every: u64) -> Result<Self> {
        if !(start_epoch < end_epoch) {
            return Err(Error::config(format!(
                "GMP start {start_epoch} must precede end {end_epoch}"
            )));
        }
        if !(final_sparsity > 0.0 && final_sparsity < 1.0) {
            return Err(Error::config(format!(
                "GMP final sparsity {final_sparsity} outside (0, 1)"
            )));
        }
        if update_every == 0 {
            return Err(Error::config("GMP update interval must be at least 1"));
        }
        Ok(GmpSchedule {
            start_epoch,
            end_epoch,
            final_sparsity,
            update_every,
        })
    }
}

/// `s_f · (1 - (1 - (t - t₀)/(t_f - t₀))³)` inside the ramp, 0 before, s_f after.
pub fn gmp_sparsity(schedule: &GmpSchedule, t: f64) -> f64 {
    if t < schedule.start_epoch {
        return 0.0;
    }
    if t >= schedule.end_epoch {
        return schedule.final_sparsity;
    }
    let progress = (t - schedule.start_epoch) / (schedule.end_epoch - schedule.start_epoch);
    schedule.final_sparsity * (1.0 - (1.0 - progress).powi(3))
}

/// Per-layer active targets summing to round((1 - s) · total), split in
/// proportion to layer size by largest remainder.
pub fn layer_targets(sizes: &[usize], sparsity: f64) -> Vec<usize> {
    let total: usize = sizes.iter().sum();
    let want = ((1.0 - sparsity) * total as f64).round() as usize;
    let exact: Vec<f64> = sizes.iter().map(|&s| (1.0 - sparsity) * s as f64).collect();
    let mut out: Vec<usize> = exact.iter().map(|v| v.floor() as usize).collect();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    let mut missing = want.saturating_sub(out.iter().sum());
    for &l in order.iter().cycle().take(sizes.len() * 2) {
        if missing == 0 {
            break;
        }
        if out[l] < sizes[l] {
            out[l] += 1;
            missing -= 1;
        }
    }
    out
}

/// One GMP tick at time `t` (epochs): each layer drops its smallest-magnitude
/// active weights until it reaches its share of the scheduled sparsity.
/// Never regrows. Returns the number of weights removed.
pub fn gmp_step<T: Scalar>(net: &mut Network<T>, schedule: &GmpSchedule, t: f64) -> Result<usize> {
    let sizes: Vec<usize> = net.layers().iter().map(|l| l.size()).collect();
    let targets = layer_targets(&sizes, gmp_sparsity(schedule, t));
    let mut removed = 0;
    for (layer, target) in net.layers_mut().iter_mut().zip(targets) {
        let active = layer.active_count();
        if target >= active {
            continue;
        }
        let w = layer.weights().as_slice();
        let scored: Vec<(usize, T)> = layer
            .mask()
            .active_indices()
            .into_iter()
            .map(|i| (i, w[i]))
            .collect();
        let drop = topk_abs(&scored, active - target, Order::Smallest)?;
        let mut mask: Mask = layer.mask().clone();
        for &i in &drop {
            mask.set_flat(i, false);
        }
        removed += drop.len();
        layer.set_mask(mask)?;
    }
    Ok(removed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn anchors() {
        let s = GmpSchedule::new(40.0, 200.0, 0.9, 100).unwrap();
        assert_eq!(gmp_sparsity(&s, 0.0), 0.0);
        assert_eq!(gmp_sparsity(&s, 40.0), 0.0);
        assert!((gmp_sparsity(&s, 120.0) - 0.875 * 0.9).abs() < 1e-12);
        assert_eq!(gmp_sparsity(&s, 200.0), 0.9);
        assert_eq!(gmp_sparsity(&s, 250.0), 0.9);
    }

    #[test]
    fn targets_sum_exactly() {
        let sizes = [784 * 300, 300 * 100, 100 * 10];
        for s in [0.0, 0.1, 0.333, 0.95, 0.999] {
            let t = layer_targets(&sizes, s);
            let total: usize = sizes.iter().sum();
            assert_eq!(t.iter().sum::<usize>(), ((1.0 - s) * total as f64).round() as usize);
            assert!(t.iter().zip(&sizes).all(|(a, b)| a <= b));
        }
    }

    #[test]
    fn invalid_schedule() {
        assert!(GmpSchedule::new(10.0, 10.0, 0.5, 1).is_err());
        assert!(GmpSchedule::new(0.0, 10.0, 1.0, 1).is_err());
        assert!(GmpSchedule::new(0.0, 10.0, 0.5, 0).is_err());
    }
}

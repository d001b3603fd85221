use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Cosine-annealed prune rate over topology updates:
/// `p(u) = p₀/2 · (1 + cos(π·u/total_updates))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PruneGrowSchedule {
    pub initial_rate: f64,
    pub total_updates: u64,
}

impl PruneGrowSchedule {
    pub fn new(initial_rate: f64, total_updates: u64) -> Result<Self> {
        if !(initial_rate > 0.0 && initial_rate < 1.0) {
            return Err(Error::config(format!(
                "initial prune rate {initial_rate} outside (0, 1)"
            )));
        }
        Ok(PruneGrowSchedule {
            initial_rate,
            total_updates,
        })
    }

    /// Schedule for a run of `total_iterations` with one update every
    /// `delta_t` iterations: total_updates = ⌈total_iterations / ΔT⌉.
    pub fn for_run(initial_rate: f64, total_iterations: u64, delta_t: u64) -> Result<Self> {
        if delta_t == 0 {
            return Err(Error::config("update interval must be at least 1"));
        }
        Self::new(initial_rate, total_iterations.div_ceil(delta_t))
    }
}

pub fn prune_rate(schedule: &PruneGrowSchedule, u: u64) -> Result<f64> {
    if u > schedule.total_updates {
        return Err(Error::Bounds(format!(
            "update {u} beyond schedule length {}",
            schedule.total_updates
        )));
    }
    if schedule.total_updates == 0 {
        return Ok(schedule.initial_rate);
    }
    if u == schedule.total_updates {
        return Ok(0.0);
    }
    let phase = PI * u as f64 / schedule.total_updates as f64;
    Ok(schedule.initial_rate / 2.0 * (1.0 + phase.cos()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn anchors() {
        let s = PruneGrowSchedule::new(0.5, 100).unwrap();
        assert_eq!(prune_rate(&s, 0).unwrap(), 0.5);
        assert!((prune_rate(&s, 50).unwrap() - 0.25).abs() < 1e-12);
        assert_eq!(prune_rate(&s, 100).unwrap(), 0.0);
        assert!(matches!(prune_rate(&s, 101), Err(Error::Bounds(_))));
    }

    #[test]
    fn non_increasing() {
        let s = PruneGrowSchedule::new(0.5, 37).unwrap();
        let rates: Vec<f64> = (0..=37).map(|u| prune_rate(&s, u).unwrap()).collect();
        assert!(rates.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn run_length_rounds_up() {
        let s = PruneGrowSchedule::for_run(0.5, 940, 500).unwrap();
        assert_eq!(s.total_updates, 2);
        assert!(PruneGrowSchedule::for_run(0.5, 10, 0).is_err());
        assert!(PruneGrowSchedule::new(1.0, 3).is_err());
    }
}

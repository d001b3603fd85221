//! In-time over-parameterization bookkeeping.
//!
//! The tracker keeps, per layer, the union of every mask the run has used
//! ("fired" coordinates). The ITOP rate R_s is the size of that union over
//! the weight count of the dense network. Biases are not counted.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndcore::{BitGrid, Mask};
use crate::nn::checkpoint::Reader;
use crate::sparsity::TopologyUpdatePlan;

pub const SECTION_TAG: &[u8; 4] = b"FIRE";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ItopTracker {
    fired: Vec<BitGrid>,
    dense_total: usize,
    updates: u64,
    newly_fired: Vec<u64>,
    reliable_fraction: Vec<f64>,
    /// Coordinates grown by the latest update, per layer, awaiting the next
    /// update to measure their survival.
    last_grown: Vec<Vec<usize>>,
}

/// Snapshot of the exploration statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItopReport {
    pub rs: f64,
    pub layer_rs: Vec<f64>,
    pub updates: u64,
    pub newly_fired_per_update: Vec<u64>,
    /// Fraction of the weights grown at update u still active after update u+1.
    pub reliable_fraction_per_update: Vec<f64>,
}

impl ItopTracker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_initialized(&self) -> bool {
        !self.fired.is_empty()
    }

    /// Seeds the union with the initial masks.
    pub fn record_init(&mut self, masks: &[Mask]) -> Result<()> {
        if self.is_initialized() {
            return Err(Error::State("tracker already initialized".into()));
        }
        if masks.is_empty() {
            return Err(Error::State("no masks to record".into()));
        }
        self.fired = masks.iter().map(BitGrid::from_mask).collect();
        self.dense_total = masks.iter().map(Mask::len).sum();
        self.last_grown = vec![Vec::new(); masks.len()];
        Ok(())
    }

    /// Adds the coordinates grown by an applied plan to the union.
    pub fn record_update(&mut self, plan: &TopologyUpdatePlan) -> Result<()> {
        if !self.is_initialized() {
            return Err(Error::State("tracker not initialized".into()));
        }
        if plan.layers.len() != self.fired.len() {
            return Err(Error::Bounds(format!(
                "plan covers {} layers, tracker {}",
                plan.layers.len(),
                self.fired.len()
            )));
        }
        for (grid, lp) in self.fired.iter().zip(&plan.layers) {
            if let Some(&bad) = lp.grown.iter().chain(&lp.pruned).find(|&&i| i >= grid.len()) {
                return Err(Error::Bounds(format!(
                    "coordinate {bad} outside layer of {}",
                    grid.len()
                )));
            }
        }
        let mut survivors = 0usize;
        let mut prior = 0usize;
        for (l, lp) in plan.layers.iter().enumerate() {
            let prev = &self.last_grown[l];
            let mut pruned = lp.pruned.clone();
            pruned.sort_unstable();
            prior += prev.len();
            survivors += prev
                .iter()
                .filter(|i| pruned.binary_search(i).is_err())
                .count();
        }
        if self.updates > 0 && prior > 0 {
            self.reliable_fraction.push(survivors as f64 / prior as f64);
        }
        let mut fresh = 0u64;
        for ((grid, lp), last) in self
            .fired
            .iter_mut()
            .zip(&plan.layers)
            .zip(self.last_grown.iter_mut())
        {
            for &i in &lp.grown {
                fresh += grid.insert(i) as u64;
            }
            let mut grown = lp.grown.clone();
            grown.sort_unstable();
            *last = grown;
        }
        self.newly_fired.push(fresh);
        self.updates += 1;
        Ok(())
    }

    /// ‖θ¹ ∪ … ∪ θᵘ‖₀ / ‖θ‖₀ over weight coordinates.
    pub fn rs(&self) -> f64 {
        if self.dense_total == 0 {
            return 0.0;
        }
        self.fired_count() as f64 / self.dense_total as f64
    }

    pub fn layer_rs(&self) -> Vec<f64> {
        self.fired
            .iter()
            .map(|g| g.count() as f64 / g.len() as f64)
            .collect()
    }

    pub fn fired_count(&self) -> usize {
        self.fired.iter().map(BitGrid::count).sum()
    }

    pub fn dense_total(&self) -> usize {
        self.dense_total
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn fired(&self) -> &[BitGrid] {
        &self.fired
    }

    /// True when every current mask lies inside the fired union.
    pub fn covers(&self, masks: &[Mask]) -> bool {
        masks.len() == self.fired.len() && self.fired.iter().zip(masks).all(|(g, m)| g.covers(m))
    }

    pub fn report(&self) -> ItopReport {
        ItopReport {
            rs: self.rs(),
            layer_rs: self.layer_rs(),
            updates: self.updates,
            newly_fired_per_update: self.newly_fired.clone(),
            reliable_fraction_per_update: self.reliable_fraction.clone(),
        }
    }

    /// Payload of the checkpoint "FIRE" section:
    /// u32 layers; per layer u32 rows, u32 cols, bitset bytes, u32 n, n×u32 last grown;
    /// u64 updates; u64 n, n×u64 newly fired; u64 n, n×f64 reliable fractions.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&(self.fired.len() as u32).to_le_bytes());
        for (g, last) in self.fired.iter().zip(&self.last_grown) {
            let (r, c) = g.shape();
            out.extend_from_slice(&(r as u32).to_le_bytes());
            out.extend_from_slice(&(c as u32).to_le_bytes());
            out.extend_from_slice(&g.to_bytes());
            out.extend_from_slice(&(last.len() as u32).to_le_bytes());
            for &i in last {
                out.extend_from_slice(&(i as u32).to_le_bytes());
            }
        }
        out.extend_from_slice(&self.updates.to_le_bytes());
        out.extend_from_slice(&(self.newly_fired.len() as u64).to_le_bytes());
        for &n in &self.newly_fired {
            out.extend_from_slice(&n.to_le_bytes());
        }
        out.extend_from_slice(&(self.reliable_fraction.len() as u64).to_le_bytes());
        for &f in &self.reliable_fraction {
            out.extend_from_slice(&f.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let n_layers = r.u32()? as usize;
        let mut fired = Vec::with_capacity(n_layers);
        let mut last_grown = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let at = r.offset();
            let rows = r.u32()? as usize;
            let cols = r.u32()? as usize;
            let n = rows
                .checked_mul(cols)
                .filter(|&n| n <= bytes.len() * 8)
                .ok_or_else(|| Error::format(at, "implausible fired grid"))?;
            fired.push(BitGrid::from_bytes(rows, cols, r.take(n.div_ceil(8))?)?);
            let k = r.u32()? as usize;
            let mut last = Vec::with_capacity(k.min(n));
            for _ in 0..k {
                last.push(r.u32()? as usize);
            }
            last_grown.push(last);
        }
        let updates = r.u64()?;
        let n = r.u64()? as usize;
        let newly_fired = (0..n).map(|_| r.u64()).collect::<Result<_>>()?;
        let n = r.u64()? as usize;
        let reliable_fraction = (0..n).map(|_| r.f64()).collect::<Result<_>>()?;
        let dense_total = fired.iter().map(BitGrid::len).sum();
        Ok(ItopTracker {
            fired,
            dense_total,
            updates,
            newly_fired,
            reliable_fraction,
            last_grown,
        })
    }
}

/// Training accuracy minus test accuracy.
pub fn generalization_error(train_acc: f64, test_acc: f64) -> f64 {
    train_acc - test_acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparsity::LayerPlan;

    fn plan(grown: Vec<usize>, pruned: Vec<usize>) -> TopologyUpdatePlan {
        TopologyUpdatePlan {
            update: 1,
            iteration: 1,
            prune_rate: 0.5,
            layers: vec![LayerPlan { pruned, grown }],
        }
    }

    #[test]
    fn density_identity() {
        let mut t = ItopTracker::new();
        t.record_init(&[Mask::from_active(10, 10, &[0, 1, 2, 3, 4]).unwrap()])
            .unwrap();
        assert_eq!(t.rs(), 0.05);
        let mut d = ItopTracker::new();
        d.record_init(&[Mask::full(3, 3)]).unwrap();
        assert_eq!(d.rs(), 1.0);
        assert!(matches!(d.record_init(&[Mask::full(3, 3)]), Err(Error::State(_))));
    }

    #[test]
    fn union_arithmetic() {
        let mut t = ItopTracker::new();
        t.record_init(&[Mask::from_active(2, 5, &[0, 1, 2, 3, 4]).unwrap()])
            .unwrap();
        t.record_update(&plan(vec![5, 6], vec![0, 1])).unwrap();
        assert!((t.rs() - 0.7).abs() < 1e-15);
        t.record_update(&plan(vec![0, 1], vec![5, 6])).unwrap();
        assert!((t.rs() - 0.7).abs() < 1e-15);
        assert_eq!(t.report().newly_fired_per_update, vec![2, 0]);
        assert_eq!(t.report().reliable_fraction_per_update, vec![0.0]);
        assert!(matches!(
            t.record_update(&plan(vec![10], vec![2])),
            Err(Error::Bounds(_))
        ));
    }

    #[test]
    fn encode_roundtrip() {
        let mut t = ItopTracker::new();
        t.record_init(&[Mask::from_active(3, 4, &[0, 5]).unwrap()]).unwrap();
        t.record_update(&plan(vec![7], vec![5])).unwrap();
        let back = ItopTracker::decode(&t.encode()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn gen_error() {
        assert!((generalization_error(0.99, 0.55) - 0.44).abs() < 1e-12);
        assert_eq!(generalization_error(0.7, 0.7), 0.0);
    }
}

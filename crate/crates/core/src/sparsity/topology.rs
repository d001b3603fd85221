//! Magnitude pruning, regrowth and the periodic connectivity update.

use crate::error::{Error, Result};
use crate::ndcore::{topk_abs, Matrix, Order, Rng, Scalar};
use crate::nn::{GradMode, Gradients, Network, SparseLayer};
use crate::sparsity::{prune_rate, PruneGrowSchedule};

/// Flat indices pruned and grown in one layer by one update.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LayerPlan {
    pub pruned: Vec<usize>,
    pub grown: Vec<usize>,
}

impl LayerPlan {
    pub fn is_empty(&self) -> bool {
        self.pruned.is_empty() && self.grown.is_empty()
    }
}

/// Prune/grow sets for every layer, produced at one ΔT boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct TopologyUpdatePlan {
    /// Update index u (1 for the first update of a run).
    pub update: u64,
    pub iteration: u64,
    pub prune_rate: f64,
    pub layers: Vec<LayerPlan>,
}

/// The `floor(p · active)` active coordinates of smallest |w|, layer-local.
///
/// The count is capped at the number of inactive coordinates so that regrowth
/// (which may not reuse just-pruned slots) can always restore the layer's
/// size. A fully dense layer therefore never rewires.
pub fn prune_magnitude<T: Scalar>(layer: &SparseLayer<T>, p: f64) -> Result<Vec<usize>> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::config(format!("prune rate {p} outside [0, 1)")));
    }
    let active = layer.active_count();
    let k = ((p * active as f64).floor() as usize).min(layer.size() - active);
    if k == 0 {
        return Ok(Vec::new());
    }
    let w = layer.weights().as_slice();
    let active: Vec<(usize, T)> = layer
        .mask()
        .active_indices()
        .into_iter()
        .map(|i| (i, w[i]))
        .collect();
    topk_abs(&active, k, Order::Smallest)
}

/// Inactive coordinates not listed in `excluded` (which must be sorted).
fn eligible<T: Scalar>(layer: &SparseLayer<T>, excluded: &[usize]) -> Vec<usize> {
    let mut ex = excluded.iter().peekable();
    layer
        .mask()
        .inactive_indices()
        .into_iter()
        .filter(|&i| {
            while ex.peek().is_some_and(|&&e| e < i) {
                ex.next();
            }
            ex.peek() != Some(&&i)
        })
        .collect()
}

fn sorted(v: &[usize]) -> Vec<usize> {
    let mut v = v.to_vec();
    v.sort_unstable();
    v
}

/// `k` coordinates drawn uniformly without replacement from the inactive
/// coordinates minus `excluded`.
pub fn grow_random<T: Scalar>(layer: &SparseLayer<T>, k: usize, rng: &mut Rng, excluded: &[usize]) -> Result<Vec<usize>> {
    if k == 0 {
        return Ok(Vec::new());
    }
    let pool = eligible(layer, &sorted(excluded));
    if k > pool.len() {
        return Err(Error::Topology(format!(
            "cannot grow {k} connections from {} eligible",
            pool.len()
        )));
    }
    Ok(rng.sample_from(&pool, k))
}

/// The `k` eligible coordinates with the largest dense-gradient magnitude.
pub fn grow_gradient<T: Scalar>(layer: &SparseLayer<T>, dense_grad: &Matrix<T>, k: usize, excluded: &[usize]) -> Result<Vec<usize>> {
    if dense_grad.shape() != layer.weights().shape() {
        return Err(Error::shape(format!(
            "gradient {:?} for layer {:?}",
            dense_grad.shape(),
            layer.weights().shape()
        )));
    }
    if k == 0 {
        return Ok(Vec::new());
    }
    let pool = eligible(layer, &sorted(excluded));
    if k > pool.len() {
        return Err(Error::Topology(format!(
            "cannot grow {k} connections from {} eligible",
            pool.len()
        )));
    }
    let g = dense_grad.as_slice();
    let scored: Vec<(usize, T)> = pool.into_iter().map(|i| (i, g[i])).collect();
    topk_abs(&scored, k, Order::Largest)
}

/// Checks the plan invariants against the layer's current mask.
pub fn validate_plan<T: Scalar>(layer: &SparseLayer<T>, plan: &LayerPlan) -> Result<()> {
    let n = layer.size();
    let mask = layer.mask();
    if plan.pruned.len() != plan.grown.len() {
        return Err(Error::Topology(format!(
            "pruned {} but grew {}",
            plan.pruned.len(),
            plan.grown.len()
        )));
    }
    let mut seen = vec![0u8; n];
    for &i in &plan.pruned {
        if i >= n {
            return Err(Error::Bounds(format!("pruned index {i} outside layer of {n}")));
        }
        if !mask.is_active(i) {
            return Err(Error::Topology(format!("pruned index {i} is not active")));
        }
        if seen[i] != 0 {
            return Err(Error::Topology(format!("index {i} pruned twice")));
        }
        seen[i] = 1;
    }
    for &i in &plan.grown {
        if i >= n {
            return Err(Error::Bounds(format!("grown index {i} outside layer of {n}")));
        }
        if seen[i] == 1 {
            return Err(Error::Topology(format!("index {i} both pruned and grown")));
        }
        if seen[i] == 2 || mask.is_active(i) {
            return Err(Error::Topology(format!("grown index {i} already active")));
        }
        seen[i] = 2;
    }
    Ok(())
}

/// Applies one layer's plan. Pruned and grown coordinates both end with
/// weight 0 and momentum 0; the active count is unchanged.
pub fn apply_update<T: Scalar>(layer: &mut SparseLayer<T>, plan: &LayerPlan) -> Result<()> {
    validate_plan(layer, plan)?;
    if plan.is_empty() {
        return Ok(());
    }
    let mut mask = layer.mask().clone();
    for &i in &plan.pruned {
        mask.set_flat(i, false);
    }
    for &i in &plan.grown {
        mask.set_flat(i, true);
    }
    for &i in plan.pruned.iter().chain(&plan.grown) {
        layer.weights.as_mut_slice()[i] = T::zero();
        layer.momentum.as_mut_slice()[i] = T::zero();
    }
    layer.set_mask(mask)
}

pub fn apply_plan<T: Scalar>(net: &mut Network<T>, plan: &TopologyUpdatePlan) -> Result<()> {
    if plan.layers.len() != net.layers().len() {
        return Err(Error::Topology("plan depth does not match network".into()));
    }
    for (layer, lp) in net.layers().iter().zip(&plan.layers) {
        validate_plan(layer, lp)?;
    }
    for (layer, lp) in net.layers_mut().iter_mut().zip(&plan.layers) {
        apply_update(layer, lp)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GrowthStrategy {
    Random,
    Gradient,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DstMethod {
    Static,
    Set,
    Rigl,
}

impl DstMethod {
    pub fn growth(self) -> Option<GrowthStrategy> {
        match self {
            DstMethod::Static => None,
            DstMethod::Set => Some(GrowthStrategy::Random),
            DstMethod::Rigl => Some(GrowthStrategy::Gradient),
        }
    }
}

/// Connectivity-update settings for one run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DstParams {
    pub method: DstMethod,
    /// Iterations between updates; `None` means never.
    pub delta_t: Option<u64>,
    pub schedule: PruneGrowSchedule,
    /// No updates after this iteration (controlled stop-exploration runs).
    pub stop_after: Option<u64>,
}

impl DstParams {
    /// Update index at `iteration`, or `None` when no update is due.
    pub fn update_index(&self, iteration: u64) -> Option<u64> {
        let dt = self.delta_t?;
        if self.method == DstMethod::Static
            || iteration == 0
            || iteration % dt != 0
            || self.stop_after.is_some_and(|s| iteration > s)
        {
            return None;
        }
        Some(iteration / dt)
    }
}

/// Builds the connectivity update due after optimizer step `iteration`, if any.
///
/// Each layer prunes `floor(p(u) · active)` smallest-magnitude weights and
/// regrows the same number among the inactive coordinates that were not just
/// pruned: uniformly at random for SET, by largest |dense gradient| for RigL.
/// The plan is not applied.
pub fn dst_step<T: Scalar>(
    net: &Network<T>,
    params: &DstParams,
    iteration: u64,
    rng: &mut Rng,
    last_dense_grads: Option<&Gradients<T>>,
) -> Result<Option<TopologyUpdatePlan>> {
    if params.delta_t == Some(0) {
        return Err(Error::config("update interval must be at least 1"));
    }
    let Some(u) = params.update_index(iteration) else {
        return Ok(None);
    };
    let growth = params.method.growth().expect("static never updates");
    let grads = match growth {
        GrowthStrategy::Gradient => match last_dense_grads {
            Some(g) if g.mode == GradMode::Dense => Some(g),
            _ => {
                return Err(Error::config(
                    "gradient growth requires the dense gradient of the last step",
                ))
            }
        },
        GrowthStrategy::Random => None,
    };
    let p = prune_rate(&params.schedule, u)?;
    let mut layers = Vec::with_capacity(net.layers().len());
    for (l, layer) in net.layers().iter().enumerate() {
        let pruned = prune_magnitude(layer, p)?;
        let grown = match grads {
            None => grow_random(layer, pruned.len(), rng, &pruned)?,
            Some(g) => grow_gradient(layer, &g.layers[l].weights, pruned.len(), &pruned)?,
        };
        layers.push(LayerPlan { pruned, grown });
    }
    Ok(Some(TopologyUpdatePlan {
        update: u,
        iteration,
        prune_rate: p,
        layers,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ndcore::Mask;

    fn layer(w: &[f64], rows: usize, cols: usize, active: &[usize]) -> SparseLayer<f64> {
        SparseLayer::from_parts(
            Matrix::from_vec(rows, cols, w.to_vec()).unwrap(),
            vec![0.0; cols],
            Mask::from_active(rows, cols, active).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn prune_examples() {
        let l = layer(&[0.5, -0.2, 0.05, -0.9], 2, 2, &[0, 1, 2, 3]);
        assert!(prune_magnitude(&l, 0.0).unwrap().is_empty());
        assert!(prune_magnitude(&l, 0.5).unwrap().is_empty());
        let l = layer(&[0.5, -0.2, 0.05, 0.0], 2, 2, &[0, 1, 2]);
        assert_eq!(prune_magnitude(&l, 0.5).unwrap(), vec![2]);
        let l = layer(&[0.5, -0.2, 0.05, 0.0, 0.0, 0.0], 2, 3, &[0, 1, 2, 3]);
        assert_eq!(prune_magnitude(&l, 0.5).unwrap(), vec![2, 3]);
    }

    #[test]
    fn forced_random_growth() {
        let l = layer(&[0.5, -0.2, 0.0, -0.9], 2, 2, &[0, 1, 3]);
        let mut rng = Rng::new(1);
        assert_eq!(grow_random(&l, 1, &mut rng, &[]).unwrap(), vec![2]);
        assert!(grow_random(&l, 0, &mut rng, &[]).unwrap().is_empty());
        assert!(matches!(
            grow_random(&l, 1, &mut rng, &[2]),
            Err(Error::Topology(_))
        ));
    }

    #[test]
    fn gradient_growth_picks_largest() {
        let l = layer(&[0.5, 0.0, 0.0, 0.1], 2, 2, &[0, 3]);
        let g = Matrix::from_vec(2, 2, vec![5.0, 0.9, -0.1, 7.0]).unwrap();
        assert_eq!(grow_gradient(&l, &g, 1, &[]).unwrap(), vec![1]);
        assert_eq!(grow_gradient(&l, &g, 2, &[]).unwrap(), vec![1, 2]);
    }

    #[test]
    fn apply_keeps_count_and_zeroes() {
        let mut l = layer(&[0.5, -0.2, 0.05, 0.0], 2, 2, &[0, 1, 2]);
        l.momentum.as_mut_slice().copy_from_slice(&[0.1, 0.2, 0.3, 0.0]);
        let plan = LayerPlan {
            pruned: vec![2],
            grown: vec![3],
        };
        apply_update(&mut l, &plan).unwrap();
        assert_eq!(l.active_count(), 3);
        assert_eq!(l.weights().as_slice()[3], 0.0);
        assert_eq!(l.momentum().as_slice()[3], 0.0);
        assert!(!l.mask().is_active(2));
        assert_eq!(l.off_mask_mass(), 0.0);
    }

    #[test]
    fn apply_rejects_violations() {
        let mut l = layer(&[0.5, -0.2, 0.05, 0.0], 2, 2, &[0, 1, 2]);
        let bad = [
            LayerPlan { pruned: vec![3], grown: vec![3] },
            LayerPlan { pruned: vec![0], grown: vec![1] },
            LayerPlan { pruned: vec![0], grown: vec![] },
            LayerPlan { pruned: vec![0], grown: vec![0] },
            LayerPlan { pruned: vec![9], grown: vec![3] },
        ];
        for plan in &bad {
            assert!(apply_update(&mut l, plan).is_err(), "{plan:?}");
        }
        let before = l.clone();
        apply_update(&mut l, &LayerPlan::default()).unwrap();
        assert_eq!(l, before);
    }

    #[test]
    fn update_timing() {
        let params = DstParams {
            method: DstMethod::Set,
            delta_t: Some(5),
            schedule: PruneGrowSchedule::new(0.5, 10).unwrap(),
            stop_after: None,
        };
        assert_eq!(params.update_index(7), None);
        assert_eq!(params.update_index(10), Some(2));
        let stat = DstParams {
            method: DstMethod::Static,
            ..params
        };
        assert_eq!(stat.update_index(10), None);
        let stopped = DstParams {
            stop_after: Some(6),
            ..params
        };
        assert_eq!(stopped.update_index(5), Some(1));
        assert_eq!(stopped.update_index(10), None);
    }
}

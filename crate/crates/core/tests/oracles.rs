//! Statistical oracles: random growth is uniform over the eligible pool, and
//! short update intervals re-prune more of what they just grew.

use itop_core::itop::ItopTracker;
use itop_core::ndcore::{Mask, Matrix, Rng};
use itop_core::nn::{loss_and_grad, sgd_step_network, GradMode, Network, OptimizerState, SparseLayer};
use itop_core::sparsity::{
    allocate_er, apply_plan, dst_step, grow_random, sample_masks, DstMethod, DstParams, LayerShape, PruneGrowSchedule,
};

#[test]
fn random_growth_is_uniform_over_eligible() {
    // 4×4 layer with 6 active, 2 excluded (just pruned): 8 eligible slots.
    let active = [0, 3, 5, 6, 10, 15];
    let excluded = [1, 12];
    let mask = Mask::from_active(4, 4, &active).unwrap();
    let layer = SparseLayer::<f64>::from_parts(Matrix::zeros(4, 4), vec![0.0; 4], mask).unwrap();
    let (trials, k) = (10_000u32, 3usize);
    let mut hits = [0u32; 16];
    let mut rng = Rng::new(5);
    for _ in 0..trials {
        let grown = grow_random(&layer, k, &mut rng, &excluded).unwrap();
        assert_eq!(grown.len(), k);
        for i in grown {
            hits[i] += 1;
        }
    }
    let eligible: Vec<usize> = (0..16).filter(|i| !active.contains(i) && !excluded.contains(i)).collect();
    let p = k as f64 / eligible.len() as f64;
    let mean = f64::from(trials) * p;
    let sigma = (f64::from(trials) * p * (1.0 - p)).sqrt();
    for i in 0..16 {
        if eligible.contains(&i) {
            let dev = (f64::from(hits[i]) - mean).abs();
            assert!(dev <= 3.0 * sigma, "slot {i}: {} hits, expected {mean:.0} ± {:.0}", hits[i], 3.0 * sigma);
        } else {
            assert_eq!(hits[i], 0, "slot {i} is not eligible");
        }
    }
}

/// Mean fraction of each update's grown weights that the next update prunes.
fn regrow_churn(delta_t: u64, seed: u64) -> f64 {
    let widths = [20, 16, 4];
    let shapes: Vec<LayerShape> = widths.windows(2).map(|w| LayerShape::dense(w[0], w[1])).collect();
    let alloc = allocate_er(&shapes, 0.3).unwrap();
    let mut net = Network::<f64>::init_sparse(&widths, sample_masks(&shapes, &alloc, seed), seed).unwrap();
    let mut opt = OptimizerState::new(0.05, 0.9, 5e-4).unwrap();
    let iters = 600;
    let params = DstParams {
        method: DstMethod::Set,
        delta_t: Some(delta_t),
        schedule: PruneGrowSchedule::for_run(0.3, iters, delta_t).unwrap(),
        stop_after: None,
    };
    let mut tracker = ItopTracker::new();
    tracker.record_init(&net.masks()).unwrap();
    // Learnable toy task: the label is the argmax over four fixed projections.
    let mut rng = Rng::new(seed ^ 0xA5);
    let proj: Vec<f64> = (0..20 * 4).map(|_| rng.normal()).collect();
    for it in 1..=iters {
        let x: Vec<f64> = (0..8 * 20).map(|_| rng.normal()).collect();
        let y: Vec<usize> = x
            .chunks(20)
            .map(|row| {
                let score = |c: usize| (0..20).map(|f| row[f] * proj[f * 4 + c]).sum::<f64>();
                (0..4).max_by(|&a, &b| score(a).total_cmp(&score(b))).unwrap()
            })
            .collect();
        let x = Matrix::from_vec(8, 20, x).unwrap();
        let (logits, cache) = net.forward(&x).unwrap();
        let (_, d) = loss_and_grad(&logits, &y).unwrap();
        let g = net.backward(&cache, &d, GradMode::Masked).unwrap();
        sgd_step_network(&mut net, &g, &mut opt).unwrap();
        if let Some(plan) = dst_step(&net, &params, it, &mut rng, None).unwrap() {
            apply_plan(&mut net, &plan).unwrap();
            tracker.record_update(&plan).unwrap();
        }
    }
    let reliable = tracker.report().reliable_fraction_per_update;
    assert!(!reliable.is_empty());
    1.0 - reliable.iter().sum::<f64>() / reliable.len() as f64
}

#[test]
fn short_intervals_reprune_fresh_growth() {
    for seed in 1..=3 {
        let fast = regrow_churn(1, seed);
        let slow = regrow_churn(100, seed);
        assert!(fast > slow, "seed {seed}: churn at ΔT=1 {fast:.3} not above ΔT=100 {slow:.3}");
    }
}

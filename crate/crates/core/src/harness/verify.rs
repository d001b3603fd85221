//! Built-in oracle checks behind `itop verify`. Each check compares the
//! engine against an independent computation and prints one PASS/FAIL line.

use crate::baselines::gmp_sparsity;
use crate::baselines::GmpSchedule;
use crate::harness::config::{Method, TrainConfig};
use crate::harness::data_spec::load_splits;
use crate::harness::run::run_in_memory;
use crate::ndcore::{masked_matmul_csr, Csr, Mask, Matrix, Rng};
use crate::nn::{checkpoint, loss_and_grad, GradMode, Network};
use crate::sparsity::{
    allocate_er, allocate_erk, apply_plan, dst_step, prune_rate, sample_masks, DstMethod, DstParams, LayerShape,
    PruneGrowSchedule,
};

/// Outcome of one check.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

fn loss_of(net: &Network<f64>, x: &Matrix<f64>, y: &[usize]) -> f64 {
    let (logits, _) = net.forward(x).expect("forward");
    loss_and_grad(&logits, y).expect("loss").0
}

/// Analytic dense-mode gradients against central differences, at active
/// and inactive coordinates of random small nets.
pub fn gradient_check() -> Check {
    let mut worst: f64 = 0.0;
    for case in 0..5u64 {
        let mut rng = Rng::new(100 + case);
        let widths = [2 + rng.below(6) as usize, 2 + rng.below(6) as usize, 2 + rng.below(6) as usize];
        let shapes: Vec<LayerShape> = widths.windows(2).map(|w| LayerShape::dense(w[0], w[1])).collect();
        let alloc = allocate_er(&shapes, 0.6).expect("alloc");
        let net = Network::<f64>::init_sparse(&widths, sample_masks(&shapes, &alloc, case), case).expect("net");
        let batch = 4;
        let x = Matrix::from_vec(batch, widths[0], (0..batch * widths[0]).map(|_| rng.uniform()).collect()).unwrap();
        let y: Vec<usize> = (0..batch).map(|_| rng.below(widths[2] as u64) as usize).collect();
        let (logits, cache) = net.forward(&x).unwrap();
        let (_, d) = loss_and_grad(&logits, &y).unwrap();
        let grads = net.backward(&cache, &d, GradMode::Dense).unwrap();
        // Inactive weights are zero-valued parameters: perturb them in a
        // fully connected copy carrying the same values.
        let mut dense = net.clone();
        dense.set_masks(net.layers().iter().map(|l| Mask::full(l.n_in(), l.n_out())).collect()).unwrap();
        let h = 1e-6;
        for l in 0..dense.layers().len() {
            for i in 0..dense.layers()[l].size() {
                let base = dense.layers()[l].weights().clone();
                let mut plus = dense.clone();
                let mut w = base.clone();
                w.as_mut_slice()[i] += h;
                plus.layers_mut()[l].set_weights(w).unwrap();
                let mut minus = dense.clone();
                let mut w = base.clone();
                w.as_mut_slice()[i] -= h;
                minus.layers_mut()[l].set_weights(w).unwrap();
                let numeric = (loss_of(&plus, &x, &y) - loss_of(&minus, &x, &y)) / (2.0 * h);
                let analytic = grads.layers[l].weights.as_slice()[i];
                let err = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-4);
                worst = worst.max(err);
            }
        }
    }
    check("gradient vs finite differences", worst < 1e-5, format!("max rel err {worst:.2e}"))
}

/// Compressed-row product against a plain triple loop over zeroed weights.
pub fn kernel_check() -> Check {
    let mut rng = Rng::new(7);
    let (b, k, n) = (5, 9, 6);
    let a = Matrix::from_vec(b, k, (0..b * k).map(|_| rng.normal()).collect()).unwrap();
    let w = Matrix::from_vec(k, n, (0..k * n).map(|_| rng.normal()).collect()).unwrap();
    let mask = Mask::from_active(k, n, &rng.sample_indices(k * n, 20)).unwrap();
    let got = masked_matmul_csr(&a, &w, &Csr::from_mask(&mask)).unwrap();
    let mut ok = true;
    for r in 0..b {
        for c in 0..n {
            let mut s = 0.0;
            for p in 0..k {
                if mask.get(p, c) {
                    s += a.get(r, p) * w.get(p, c);
                }
            }
            ok &= s.to_bits() == got.get(r, c).to_bits();
        }
    }
    check("masked product vs triple loop", ok, "bitwise".into())
}

/// Global budget of ER/ERK and their agreement on kernel-free shapes.
pub fn allocation_check() -> Check {
    let shapes = [LayerShape::dense(784, 300), LayerShape::dense(300, 100), LayerShape::dense(100, 10)];
    let total: usize = shapes.iter().map(LayerShape::size).sum();
    let mut ok = true;
    let mut detail = String::new();
    for density in [0.01, 0.05, 0.2, 0.5] {
        let er = allocate_er(&shapes, density).unwrap();
        let erk = allocate_erk(&shapes, density).unwrap();
        let got: usize = er.active_counts(&shapes).iter().sum();
        let want = density * total as f64;
        ok &= (got as f64 - want).abs() <= shapes.len() as f64;
        ok &= er.per_layer_density == erk.per_layer_density;
        detail = format!("density {density}: {got} vs {want:.1}");
    }
    check("ER/ERK budget", ok, detail)
}

pub fn schedule_check() -> Check {
    let s = PruneGrowSchedule::new(0.5, 10).unwrap();
    let g = GmpSchedule::new(40.0, 200.0, 0.9, 100).unwrap();
    let ok = (prune_rate(&s, 0).unwrap() - 0.5).abs() < 1e-12
        && (prune_rate(&s, 5).unwrap() - 0.25).abs() < 1e-12
        && prune_rate(&s, 10).unwrap().abs() < 1e-12
        && gmp_sparsity(&g, 40.0).abs() < 1e-12
        && (gmp_sparsity(&g, 120.0) - 0.875 * 0.9).abs() < 1e-12
        && (gmp_sparsity(&g, 200.0) - 0.9).abs() < 1e-12;
    check("cosine and cubic anchors", ok, "tol 1e-12".into())
}

/// SET updates on a toy net against a brute-force union of all masks.
pub fn union_check() -> Check {
    let widths = [12, 10, 4];
    let shapes: Vec<LayerShape> = widths.windows(2).map(|w| LayerShape::dense(w[0], w[1])).collect();
    let alloc = allocate_er(&shapes, 0.3).unwrap();
    let mut net = Network::<f64>::init_sparse(&widths, sample_masks(&shapes, &alloc, 3), 3).unwrap();
    let params = DstParams {
        method: DstMethod::Set,
        delta_t: Some(1),
        schedule: PruneGrowSchedule::new(0.5, 50).unwrap(),
        stop_after: None,
    };
    let mut tracker = crate::itop::ItopTracker::new();
    tracker.record_init(&net.masks()).unwrap();
    let mut union: Vec<Vec<bool>> = net.masks().iter().map(|m| m.bits().to_vec()).collect();
    let count0 = net.active_count();
    let mut ok = true;
    for it in 1..=50u64 {
        let mut rng = Rng::new(it);
        let plan = dst_step(&net, &params, it, &mut rng, None).unwrap().unwrap();
        apply_plan(&mut net, &plan).unwrap();
        tracker.record_update(&plan).unwrap();
        for (u, m) in union.iter_mut().zip(net.masks()) {
            for (a, &b) in u.iter_mut().zip(m.bits()) {
                *a |= b;
            }
        }
        let brute = union.iter().flatten().filter(|&&b| b).count() as f64 / net.dense_size() as f64;
        ok &= brute.to_bits() == tracker.rs().to_bits() && net.active_count() == count0;
    }
    check("R_s vs set-union oracle", ok, format!("final R_s {:.4}", tracker.rs()))
}

pub fn checkpoint_check() -> Check {
    let net = Network::<f64>::init_dense(&[5, 4, 3], 9).unwrap();
    let bytes = checkpoint::encode(&net, &[]);
    let ok = checkpoint::decode::<f64>(&bytes).is_ok_and(|(back, _)| back.bitwise_eq(&net));
    check("checkpoint round trip", ok, format!("{} bytes", bytes.len()))
}

/// Static training equals SET with an infinite interval, and reruns repeat.
pub fn determinism_check() -> Check {
    let mut cfg = TrainConfig {
        dataset: "synth:classes=3,features=12,train_per_class=30,test_per_class=10,spread=0.2".into(),
        hidden_widths: vec![8],
        epochs: 3,
        batch_size: 16,
        sparsity: 0.5,
        method: Method::Static,
        ..TrainConfig::default()
    };
    let data = load_splits(&cfg.dataset, cfg.val_fraction, cfg.data_seed).unwrap();
    let a = run_in_memory(&cfg, &data).unwrap().main;
    let b = run_in_memory(&cfg, &data).unwrap().main;
    cfg.method = Method::Set;
    cfg.delta_t = None;
    let c = run_in_memory(&cfg, &data).unwrap().main;
    check(
        "static == SET(ΔT=∞), reruns identical",
        a.epochs == b.epochs && a.epochs == c.epochs,
        format!("{} epochs", a.epochs.len()),
    )
}

pub fn all_checks() -> Vec<Check> {
    vec![
        gradient_check(),
        kernel_check(),
        allocation_check(),
        schedule_check(),
        union_check(),
        checkpoint_check(),
        determinism_check(),
    ]
}

/// Prints one line per check; true when all pass.
pub fn verify_all() -> bool {
    let checks = all_checks();
    for c in &checks {
        println!("{} {:<40} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    checks.iter().all(|c| c.passed)
}

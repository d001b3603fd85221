//! The training pipeline behind `itop train`: one run of any method, with
//! per-epoch metrics, checkpoints and resume.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::{global_magnitude_masks, gmp_step, rewind, snip_prune, BatchStream, GmpSchedule};
use crate::data::{batches, BatchPlan, Dataset};
use crate::error::{Error, Result};
use crate::harness::config::{Method, Precision, SparseInit, TrainConfig};
use crate::harness::data_spec::{load_splits, DataSplits};
use crate::harness::records::{
    append_lines, best_val_epoch, jsonl_line, write_json, write_summary_csv, EpochRecord, RunRecord,
    RunSummary, CHECKPOINT_FILE, CONFIG_FILE, METRICS_FILE, PRETRAIN_FILE, SUMMARY_CSV, SUMMARY_FILE,
};
use crate::itop::{self, generalization_error, ItopTracker};
use crate::ndcore::rng::{mix_seed, stream};
use crate::ndcore::{Mask, Matrix, Rng, Scalar};
use crate::nn::checkpoint::{self, Section};
use crate::nn::{argmax_rows, loss_and_grad, sgd_step_network, GradMode, LrSchedule, Network, OptimizerState};
use crate::sparsity::{
    allocate_er, allocate_erk, allocate_uniform, apply_plan, dst_step, sample_masks, DstMethod, DstParams,
    LayerShape, PruneGrowSchedule,
};

/// Checkpoint section holding the trainer state as JSON.
pub const TRAINER_TAG: &[u8; 4] = b"TRNR";

const EVAL_CHUNK: usize = 2048;

/// How a run interacts with its output directory.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Write metrics, summary and checkpoints under `cfg.out_dir`.
    pub persist: bool,
    /// Continue from `checkpoint.bin` in `cfg.out_dir` if present.
    pub resume: bool,
    /// Stop (returning `None`) once this many epochs, counting every phase,
    /// have completed and been checkpointed.
    pub halt_after: Option<usize>,
}

impl RunOptions {
    pub fn persisted() -> Self {
        RunOptions {
            persist: true,
            ..Default::default()
        }
    }
}

/// Main run plus, for lottery-ticket methods, the dense pre-training phase.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub main: RunRecord,
    pub pretrain: Option<RunRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Phase {
    Pretrain,
    Main,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TrainerState {
    config: String,
    phase: Phase,
    step: u64,
    last_prune_rate: f64,
    records: Vec<EpochRecord>,
    pretrain_records: Vec<EpochRecord>,
    warnings: Vec<String>,
}

struct Trainer<'a, T: Scalar> {
    cfg: &'a TrainConfig,
    data: &'a DataSplits,
    widths: Vec<usize>,
    plan: BatchPlan,
    bpe: u64,
    out: Option<PathBuf>,
    net: Network<T>,
    opt: OptimizerState,
    tracker: ItopTracker,
    state: TrainerState,
}

/// Loads the configured dataset and runs, writing everything under `out_dir`.
pub fn run(cfg: &TrainConfig) -> Result<RunRecord> {
    cfg.validate()?;
    let data = load_splits(&cfg.dataset, cfg.val_fraction, cfg.data_seed)?;
    run_with(cfg, &data, &RunOptions::persisted())?
        .map(|o| o.main)
        .ok_or_else(|| Error::State("run halted".into()))
}

/// Runs on already loaded data. Returns `None` when halted by `halt_after`.
pub fn run_with(cfg: &TrainConfig, data: &DataSplits, opts: &RunOptions) -> Result<Option<RunOutput>> {
    match cfg.precision {
        Precision::F64 => execute::<f64>(cfg, data, opts, None),
        Precision::F32 => execute::<f32>(cfg, data, opts, None),
    }
}

/// In-memory run; nothing touches the disk.
pub fn run_in_memory(cfg: &TrainConfig, data: &DataSplits) -> Result<RunOutput> {
    run_with(cfg, data, &RunOptions::default())?.ok_or_else(|| Error::State("run halted".into()))
}

/// One-shot lottery ticket: dense training from θ₀, global magnitude pruning,
/// rewind of the survivors to θ₀ and retraining with the mask fixed.
/// Returns the (pre-training, retraining) records.
pub fn lth_oneshot(cfg: &TrainConfig, data: &DataSplits) -> Result<(RunRecord, RunRecord)> {
    let mut cfg = cfg.clone();
    if !matches!(cfg.method, Method::Lth | Method::LthSet) {
        cfg.method = Method::Lth;
    }
    let out = run_in_memory(&cfg, data)?;
    let pre = out
        .pretrain
        .ok_or_else(|| Error::State("lottery-ticket run lost its pre-training phase".into()))?;
    Ok((pre, out.main))
}

/// A SET run whose initial connectivity is `masks` instead of a random draw.
/// Weights start from the dense initialization of `cfg.seed` restricted to
/// the masks, and the R_s union is seeded with them.
pub fn hybrid_init_dst(cfg: &TrainConfig, data: &DataSplits, masks: Vec<Mask>) -> Result<RunRecord> {
    let mut cfg = cfg.clone();
    cfg.method = Method::Set;
    cfg.validate()?;
    let out = match cfg.precision {
        Precision::F64 => execute::<f64>(&cfg, data, &RunOptions::default(), Some(masks)),
        Precision::F32 => execute::<f32>(&cfg, data, &RunOptions::default(), Some(masks)),
    }?;
    out.map(|o| o.main).ok_or_else(|| Error::State("run halted".into()))
}

pub fn widths_for(cfg: &TrainConfig, data: &DataSplits) -> Vec<usize> {
    let mut w = vec![data.train.n_features()];
    w.extend(&cfg.hidden_widths);
    w.push(data.train.n_classes);
    w
}

fn layer_shapes(widths: &[usize]) -> Vec<LayerShape> {
    widths.windows(2).map(|w| LayerShape::dense(w[0], w[1])).collect()
}

/// Masks of a freshly initialized sparse network under the configured allocator.
pub fn initial_masks(cfg: &TrainConfig, widths: &[usize]) -> Result<Vec<Mask>> {
    let shapes = layer_shapes(widths);
    let density = 1.0 - cfg.sparsity;
    let alloc = match cfg.sparse_init {
        SparseInit::Uniform => allocate_uniform(&shapes, density)?,
        SparseInit::Er => allocate_er(&shapes, density)?,
        SparseInit::Erk => allocate_erk(&shapes, density)?,
    };
    Ok(sample_masks(&shapes, &alloc, cfg.seed))
}

fn dst_method(m: Method) -> DstMethod {
    match m {
        Method::Set | Method::SnipSet | Method::LthSet => DstMethod::Set,
        Method::Rigl => DstMethod::Rigl,
        _ => DstMethod::Static,
    }
}

fn with_epoch(e: Error, epoch: usize) -> Error {
    match e {
        Error::Numeric(m) => Error::Numeric(format!("epoch {epoch}: {m}")),
        other => other,
    }
}

/// Mean loss and accuracy over a dataset, `None` when it is empty.
pub fn evaluate<T: Scalar>(net: &Network<T>, ds: &Dataset) -> Result<Option<(f64, f64)>> {
    if ds.is_empty() {
        return Ok(None);
    }
    let mut loss = 0.0;
    let mut correct = 0usize;
    let idx: Vec<usize> = (0..ds.len()).collect();
    for chunk in idx.chunks(EVAL_CHUNK) {
        let (x, y): (Matrix<T>, _) = ds.batch(chunk);
        let logits = net.predict(&x)?;
        let (l, _) = loss_and_grad(&logits, &y)?;
        loss += l * chunk.len() as f64;
        correct += argmax_rows(&logits).iter().zip(&y).filter(|(a, b)| a == b).count();
    }
    let n = ds.len() as f64;
    Ok(Some((loss / n, correct as f64 / n)))
}

fn execute<T: Scalar>(
    cfg: &TrainConfig,
    data: &DataSplits,
    opts: &RunOptions,
    init_masks: Option<Vec<Mask>>,
) -> Result<Option<RunOutput>> {
    cfg.validate()?;
    if data.train.is_empty() || data.test.is_empty() {
        return Err(Error::Data("training and test splits must be non-empty".into()));
    }
    let out = opts.persist.then(|| cfg.out_dir.clone());
    if let Some(dir) = &out {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let resume_from = out
        .as_ref()
        .map(|d| d.join(CHECKPOINT_FILE))
        .filter(|p| opts.resume && p.exists());
    let mut t = match resume_from {
        Some(path) => Trainer::<T>::resume(cfg, data, out, &path)?,
        None => Trainer::<T>::fresh(cfg, data, out, init_masks)?,
    };
    if t.state.phase == Phase::Pretrain {
        let epochs = cfg.pretrain_epochs();
        if t.train_phase(epochs, opts.halt_after)? {
            return Ok(None);
        }
        t.finish_pretrain()?;
    }
    if t.train_phase(cfg.epochs, opts.halt_after)? {
        return Ok(None);
    }
    t.finish()
}

fn config_key(cfg: &TrainConfig) -> String {
    let mut c = cfg.clone();
    c.out_dir = PathBuf::new();
    c.to_text()
}

impl<'a, T: Scalar> Trainer<'a, T> {
    fn fresh(
        cfg: &'a TrainConfig,
        data: &'a DataSplits,
        out: Option<PathBuf>,
        init_masks: Option<Vec<Mask>>,
    ) -> Result<Self> {
        let widths = widths_for(cfg, data);
        let plan = BatchPlan::new(cfg.batch_size);
        let bpe = plan.batches_per_epoch(data.train.len()) as u64;
        let mut warnings = Vec::new();
        let mut net = Network::<T>::init_dense(&widths, cfg.seed)?;
        let phase = match cfg.method {
            _ if init_masks.is_some() => {
                net.set_masks(init_masks.expect("checked"))?;
                Phase::Main
            }
            Method::Dense | Method::Gmp => Phase::Main,
            Method::Lth | Method::LthSet => Phase::Pretrain,
            Method::Snip | Method::SnipSet => {
                let order = batches(data.train.len(), &plan, mix_seed(cfg.seed, &[stream::SNIP]), 0)?;
                let mut source = BatchStream::new(&data.train, order);
                warnings.extend(snip_prune(&mut net, &mut source, cfg.sparsity)?);
                debug_assert_eq!(source.consumed(), 1);
                Phase::Main
            }
            Method::Static | Method::Set | Method::Rigl => {
                net.set_masks(initial_masks(cfg, &widths)?)?;
                Phase::Main
            }
        };
        let mut tracker = ItopTracker::new();
        if phase == Phase::Main {
            tracker.record_init(&net.masks())?;
        }
        let opt = OptimizerState::new(cfg.lr, cfg.momentum_coef, cfg.weight_decay)?;
        if let Some(dir) = &out {
            std::fs::write(dir.join(CONFIG_FILE), cfg.to_text()).map_err(|e| Error::io(dir, e))?;
            for f in [METRICS_FILE, PRETRAIN_FILE] {
                let p = dir.join(f);
                if p.exists() {
                    std::fs::remove_file(&p).map_err(|e| Error::io(&p, e))?;
                }
            }
        }
        Ok(Trainer {
            cfg,
            data,
            widths,
            plan,
            bpe,
            out,
            net,
            opt,
            tracker,
            state: TrainerState {
                config: config_key(cfg),
                phase,
                step: 0,
                last_prune_rate: 0.0,
                records: Vec::new(),
                pretrain_records: Vec::new(),
                warnings,
            },
        })
    }

    fn resume(cfg: &'a TrainConfig, data: &'a DataSplits, out: Option<PathBuf>, path: &Path) -> Result<Self> {
        let (net, sections) = checkpoint::load::<T>(path)?;
        let trnr = checkpoint::find(&sections, TRAINER_TAG)
            .ok_or_else(|| Error::format(0, "checkpoint has no trainer section"))?;
        let state: TrainerState = serde_json::from_slice(&trnr.payload)
            .map_err(|e| Error::Data(format!("{}: trainer state: {e}", path.display())))?;
        if state.config != config_key(cfg) {
            return Err(Error::config(format!(
                "{} was written by a different configuration",
                path.display()
            )));
        }
        let tracker = match checkpoint::find(&sections, itop::SECTION_TAG) {
            Some(s) => ItopTracker::decode(&s.payload)?,
            None => ItopTracker::new(),
        };
        let widths = widths_for(cfg, data);
        if net.widths() != widths {
            return Err(Error::shape(format!(
                "checkpoint widths {:?}, config {widths:?}",
                net.widths()
            )));
        }
        let plan = BatchPlan::new(cfg.batch_size);
        let bpe = plan.batches_per_epoch(data.train.len()) as u64;
        let mut opt = OptimizerState::new(cfg.lr, cfg.momentum_coef, cfg.weight_decay)?;
        opt.step = state.step;
        if let Some(dir) = &out {
            let text: String = state.records.iter().map(jsonl_line).collect();
            std::fs::write(dir.join(METRICS_FILE), text).map_err(|e| Error::io(dir, e))?;
            if !state.pretrain_records.is_empty() {
                let text: String = state.pretrain_records.iter().map(jsonl_line).collect();
                std::fs::write(dir.join(PRETRAIN_FILE), text).map_err(|e| Error::io(dir, e))?;
            }
        }
        Ok(Trainer {
            cfg,
            data,
            widths,
            plan,
            bpe,
            out,
            net,
            opt,
            tracker,
            state,
        })
    }

    fn records(&self) -> &Vec<EpochRecord> {
        match self.state.phase {
            Phase::Pretrain => &self.state.pretrain_records,
            Phase::Main => &self.state.records,
        }
    }

    fn dst_params(&self, epochs: usize) -> Result<DstParams> {
        let total = epochs as u64 * self.bpe;
        let method = match self.state.phase {
            Phase::Pretrain => DstMethod::Static,
            Phase::Main => dst_method(self.cfg.method),
        };
        let schedule = match self.cfg.delta_t {
            Some(dt) => PruneGrowSchedule::for_run(self.cfg.p0, total, dt)?,
            None => PruneGrowSchedule::new(self.cfg.p0, 1)?,
        };
        Ok(DstParams {
            method,
            delta_t: self.cfg.delta_t,
            schedule,
            stop_after: self.cfg.stop_exploration_epoch.map(|e| e as u64 * self.bpe),
        })
    }

    fn gmp_schedule(&self, epochs: usize) -> Result<Option<GmpSchedule>> {
        if self.cfg.method != Method::Gmp || self.state.phase != Phase::Main {
            return Ok(None);
        }
        let start = self.cfg.gmp_start_epoch.resolve(epochs) as f64;
        GmpSchedule::new(start, epochs as f64, self.cfg.sparsity, self.cfg.gmp_update_every).map(Some)
    }

    /// Trains the current phase up to `epochs`. Returns true when halted.
    fn train_phase(&mut self, epochs: usize, halt_after: Option<usize>) -> Result<bool> {
        let dst = self.dst_params(epochs)?;
        let gmp = self.gmp_schedule(epochs)?;
        let lr_sched = LrSchedule::new(self.cfg.lr, self.cfg.resolved_milestones_for(epochs))?;
        let total = epochs as u64 * self.bpe;
        let train = &self.data.train;
        let seed = self.cfg.seed;
        for epoch in self.records().len()..epochs {
            self.opt.lr = lr_sched.lr_at(epoch);
            for idx in batches(train.len(), &self.plan, seed, epoch)? {
                let (x, y): (Matrix<T>, _) = train.batch(&idx);
                let next = self.opt.step + 1;
                let dense = self.cfg.dense_grads
                    || (dst.method == DstMethod::Rigl && dst.update_index(next).is_some());
                let mode = if dense { GradMode::Dense } else { GradMode::Masked };
                let (logits, cache) = self.net.forward(&x).map_err(|e| with_epoch(e, epoch + 1))?;
                let (_, dlogits) = loss_and_grad(&logits, &y).map_err(|e| with_epoch(e, epoch + 1))?;
                let grads = self.net.backward(&cache, &dlogits, mode)?;
                sgd_step_network(&mut self.net, &grads, &mut self.opt)?;
                let it = self.opt.step;
                if let Some(g) = &gmp {
                    if it % g.update_every == 0 || it == total {
                        gmp_step(&mut self.net, g, it as f64 / self.bpe as f64)?;
                    }
                }
                let mut rng = Rng::derive(seed, &[stream::GROW, it]);
                let last = (grads.mode == GradMode::Dense).then_some(&grads);
                if let Some(plan) = dst_step(&self.net, &dst, it, &mut rng, last)? {
                    apply_plan(&mut self.net, &plan)?;
                    self.tracker.record_update(&plan)?;
                    self.state.last_prune_rate = plan.prune_rate;
                }
            }
            self.state.step = self.opt.step;
            let rec = self.epoch_record(epoch + 1)?;
            let line = jsonl_line(&rec);
            match self.state.phase {
                Phase::Pretrain => self.state.pretrain_records.push(rec),
                Phase::Main => self.state.records.push(rec),
            }
            if let Some(dir) = &self.out {
                let file = match self.state.phase {
                    Phase::Pretrain => PRETRAIN_FILE,
                    Phase::Main => METRICS_FILE,
                };
                append_lines(&dir.join(file), &line)?;
                self.save_checkpoint(dir)?;
            }
            let done = self.state.pretrain_records.len() + self.state.records.len();
            if halt_after == Some(done) {
                return Ok(true);
            }
        }
        Ok(false)
    }

    fn epoch_record(&self, epoch: usize) -> Result<EpochRecord> {
        let (train_loss, train_acc) = evaluate(&self.net, &self.data.train)?.expect("non-empty");
        let val = evaluate(&self.net, &self.data.val)?;
        let (test_loss, test_acc) = evaluate(&self.net, &self.data.test)?.expect("non-empty");
        let (rs, layer_rs, updates) = if self.tracker.is_initialized() {
            (self.tracker.rs(), self.tracker.layer_rs(), self.tracker.updates())
        } else {
            (1.0, vec![1.0; self.net.layers().len()], 0)
        };
        Ok(EpochRecord {
            epoch,
            iteration: self.opt.step,
            lr: self.opt.lr,
            prune_rate: self.state.last_prune_rate,
            train_loss,
            train_acc,
            val_loss: val.map(|v| v.0),
            val_acc: val.map(|v| v.1),
            test_loss,
            test_acc,
            rs,
            layer_rs,
            active: self.net.active_count(),
            updates,
            gen_error: generalization_error(train_acc, test_acc),
        })
    }

    fn save_checkpoint(&self, dir: &Path) -> Result<()> {
        let state = serde_json::to_vec(&self.state).expect("state serializes");
        let mut sections = vec![Section::new(TRAINER_TAG, state)];
        if self.tracker.is_initialized() {
            sections.push(Section::new(itop::SECTION_TAG, self.tracker.encode()));
        }
        checkpoint::save(&dir.join(CHECKPOINT_FILE), &self.net, &sections)
    }

    /// Prunes the pre-trained dense net globally and rewinds survivors to θ₀.
    fn finish_pretrain(&mut self) -> Result<()> {
        let masks = global_magnitude_masks(&self.net, self.cfg.sparsity)?;
        let theta0 = Network::<T>::init_dense(&self.widths, self.cfg.seed)?;
        self.net = rewind(&theta0, masks)?;
        self.tracker = ItopTracker::new();
        self.tracker.record_init(&self.net.masks())?;
        self.opt = OptimizerState::new(self.cfg.lr, self.cfg.momentum_coef, self.cfg.weight_decay)?;
        self.state.phase = Phase::Main;
        self.state.step = 0;
        self.state.last_prune_rate = 0.0;
        Ok(())
    }

    fn summary(&self, method: Method, sparsity: f64, records: &[EpochRecord]) -> RunSummary {
        let best = best_val_epoch(records).expect("at least one epoch");
        let last = records.last().expect("at least one epoch");
        RunSummary {
            method,
            sparsity,
            delta_t: self.cfg.delta_t,
            batch_size: self.cfg.batch_size,
            epochs: records.len(),
            seed: self.cfg.seed,
            stop_exploration_epoch: self.cfg.stop_exploration_epoch,
            best_epoch: best.epoch,
            best_val_loss: best.val_loss,
            best_val_test_acc: best.test_acc,
            final_test_acc: last.test_acc,
            final_train_acc: last.train_acc,
            final_gen_error: last.gen_error,
            rs: last.rs,
            updates: last.updates,
            active: last.active,
            dense_size: self.net.dense_size(),
            warnings: self.state.warnings.clone(),
        }
    }

    fn finish(self) -> Result<Option<RunOutput>> {
        let summary = self.summary(self.cfg.method, self.cfg.sparsity, &self.state.records);
        let pretrain = (!self.state.pretrain_records.is_empty()).then(|| RunRecord {
            summary: RunSummary {
                delta_t: None,
                rs: 1.0,
                active: self.net.dense_size(),
                ..self.summary(Method::Dense, 0.0, &self.state.pretrain_records)
            },
            epochs: self.state.pretrain_records.clone(),
        });
        if let Some(dir) = &self.out {
            write_json(&dir.join(SUMMARY_FILE), &summary)?;
            write_summary_csv(&dir.join(SUMMARY_CSV), &summary)?;
        }
        Ok(Some(RunOutput {
            main: RunRecord {
                epochs: self.state.records,
                summary,
            },
            pretrain,
        }))
    }
}

/// Thread count from `ITOP_THREADS` (default 1).
pub fn thread_count() -> usize {
    std::env::var("ITOP_THREADS")
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .filter(|&n: &usize| n > 0)
        .unwrap_or(1)
}

/// Installs the global worker pool sized by [`thread_count`]. Later calls
/// are no-ops. Results do not depend on the thread count.
pub fn init_threads() -> usize {
    let n = thread_count();
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    rayon::current_num_threads()
}

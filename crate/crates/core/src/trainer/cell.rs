//! Epoch loop, single grid cells, and the resumable experiment runner.

use std::collections::BTreeSet;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, CheckpointMeta};
use crate::datapipe::{self, Dataset, DatasetSlice, Split};
use crate::error::{Error, Result};
use crate::evalbench;
use crate::netspec::ArchSpec;
use crate::objectives::LossBundle;
use crate::rng::SeedStream;
use crate::scalar::Scalar;

use super::step::{self, Models, RoutingLog, StepSeeds};
use super::{Schedule, TrainConfig, Variant};

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const RECORD_FILE: &str = "record.json";

/// Identity of one grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellKey {
    pub variant: Variant,
    pub train_size: usize,
    pub seed: u64,
}

impl CellKey {
    pub fn dir_name(&self) -> String {
        format!("{}_n{}_s{}", self.variant, self.train_size, self.seed)
    }
}

/// Root stream of a cell. Depends on seed and size but not on the variant,
/// so every variant of a cell sees the same subset and the same initial
/// backbone.
pub fn cell_seed(seed: u64, train_size: usize) -> SeedStream {
    SeedStream::new(seed)
        .derive("cell")
        .derive_index(train_size as u64)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
    /// Mean discriminator (or classifier) loss components.
    pub disc: LossBundle,
    /// Mean generator loss components; zero for the baseline.
    pub gen: LossBundle,
    pub disc_steps: usize,
    pub gen_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub key: CellKey,
    pub config: TrainConfig,
    pub spec_name: String,
    pub epochs: Vec<EpochMetrics>,
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
    pub test_accuracy: f64,
    pub wall_seconds: f64,
    pub train_class_histogram: Vec<usize>,
}

impl RunRecord {
    /// Everything but wall time, for determinism comparisons.
    pub fn metrics_eq(&self, other: &RunRecord) -> bool {
        RunRecord {
            wall_seconds: 0.0,
            ..self.clone()
        } == RunRecord {
            wall_seconds: 0.0,
            ..other.clone()
        }
    }
}

/// Parsed train/test files with the fixed validation hold-out.
#[derive(Debug, Clone)]
pub struct ExperimentData {
    pub train: Dataset,
    pub test: Dataset,
    /// Train-file indices available for subset sampling.
    pub pool: DatasetSlice,
    pub val: DatasetSlice,
}

impl ExperimentData {
    pub fn new(train: Dataset, test: Dataset, val_size: usize, val_seed: u64) -> Result<Self> {
        if train.shape != test.shape || train.num_classes != test.num_classes {
            return Err(Error::Shape(
                "train and test sets differ in geometry or classes".into(),
            ));
        }
        let (pool, val) = datapipe::split_validation(&train, val_size, SeedStream::new(val_seed))?;
        Ok(ExperimentData {
            train,
            test,
            pool,
            val,
        })
    }

    pub fn train_subset(&self, size: usize, seed: SeedStream) -> Result<DatasetSlice> {
        datapipe::stratified_subset_of(&self.train, &self.pool.indices, size, Split::Train, seed)
    }
}

/// Accuracy of the classifier head over a dataset slice.
pub fn evaluate_accuracy<T: Scalar>(
    net: &crate::netspec::Network<T>,
    ds: &Dataset,
    indices: &[usize],
    chunk: usize,
) -> Result<f64> {
    let mut correct = 0usize;
    for part in indices.chunks(chunk.max(1)) {
        let b = ds.batch::<T>(part);
        let logits = net.predict_logits(&b.images, chunk);
        correct += evalbench::count_correct(&logits, &b.labels)?;
    }
    if indices.is_empty() {
        return Err(Error::InvalidArgument(
            "accuracy over an empty slice".into(),
        ));
    }
    Ok(correct as f64 / indices.len() as f64)
}

/// Live training state for one cell.
pub struct Trainer<T: Scalar> {
    pub cfg: TrainConfig,
    pub models: Models<T>,
    root: SeedStream,
    disc_steps: u64,
    gen_steps: u64,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(spec: &ArchSpec, cfg: TrainConfig, root: SeedStream) -> Result<Self> {
        cfg.validate()?;
        let models = Models::new(spec, &cfg, root.derive("init"))?;
        // Latent and shuffle streams depend on the variant so that runs of
        // different variants are not spuriously coupled beyond the init.
        let root = root.derive(cfg.variant.name());
        Ok(Trainer {
            cfg,
            models,
            root,
            disc_steps: 0,
            gen_steps: 0,
        })
    }

    pub fn disc_steps(&self) -> u64 {
        self.disc_steps
    }

    pub fn gen_steps(&self) -> u64 {
        self.gen_steps
    }
}

#[derive(Default)]
struct Acc {
    sum: LossBundle,
    n: usize,
}

impl Acc {
    fn add(&mut self, l: &LossBundle) {
        self.sum.source_loss += l.source_loss;
        self.sum.class_loss += l.class_loss;
        self.sum.penalty += l.penalty;
        self.sum.gen_objective += l.gen_objective;
        self.sum.disc_objective += l.disc_objective;
        self.n += 1;
    }

    fn mean(&self) -> LossBundle {
        let n = self.n.max(1) as f64;
        LossBundle {
            source_loss: self.sum.source_loss / n,
            class_loss: self.sum.class_loss / n,
            penalty: self.sum.penalty / n,
            gen_objective: self.sum.gen_objective / n,
            disc_objective: self.sum.disc_objective / n,
        }
    }
}

/// One pass over `slice` in shuffled mini-batches. GAN variants take a
/// generator step after every `n_critic` discriminator steps (counted
/// across epochs); the baseline takes plain supervised steps on flipped
/// batches. Validation accuracy is left at zero for the caller to fill.
pub fn train_epoch<T: Scalar>(
    tr: &mut Trainer<T>,
    ds: &Dataset,
    slice: &DatasetSlice,
    epoch: usize,
    mut log: Option<&mut RoutingLog>,
) -> Result<EpochMetrics> {
    let cfg = tr.cfg.clone();
    let mut order = slice.indices.clone();
    order.shuffle(&mut tr.root.derive("shuffle").derive_index(epoch as u64).rng());
    let policy = cfg.variant.augmentation();
    let (mut d_acc, mut g_acc) = (Acc::default(), Acc::default());
    let (mut correct, mut seen, mut d_n, mut g_n) = (0, 0, 0, 0);
    for batch_idx in order.chunks(cfg.schedule.batch_size) {
        if batch_idx.len() < 2 {
            continue;
        }
        let step = tr.disc_steps;
        let seeds = StepSeeds::new(tr.root, step);
        let batch = ds.batch::<T>(batch_idx);
        let stats = if cfg.variant.is_gan() {
            step::train_step_discriminator(&mut tr.models, &batch, &cfg, seeds, log.as_deref_mut())
        } else {
            let aug = datapipe::augment(
                &batch,
                &policy,
                tr.root.derive("augment").derive_index(step),
            );
            step::train_step_classifier(&mut tr.models, &aug)
        };
        let stats = stats.map_err(|e| abort(tr, epoch, step, &e))?;
        d_acc.add(&stats.losses);
        correct += stats.correct;
        seen += batch_idx.len();
        tr.disc_steps += 1;
        d_n += 1;
        if cfg.variant.is_gan() && tr.disc_steps % cfg.schedule.n_critic as u64 == 0 {
            let seeds = StepSeeds::new(tr.root, tr.gen_steps);
            let l = step::train_step_generator(
                &mut tr.models,
                &cfg,
                batch_idx.len(),
                seeds,
                log.as_deref_mut(),
            )
            .map_err(|e| abort(tr, epoch, step, &e))?;
            g_acc.add(&l);
            tr.gen_steps += 1;
            g_n += 1;
        }
    }
    Ok(EpochMetrics {
        epoch,
        train_accuracy: if seen == 0 {
            0.0
        } else {
            correct as f64 / seen as f64
        },
        val_accuracy: 0.0,
        disc: d_acc.mean(),
        gen: g_acc.mean(),
        disc_steps: d_n,
        gen_steps: g_n,
    })
}

/// Turns a step failure into an abort carrying a parameter summary.
fn abort<T: Scalar>(tr: &Trainer<T>, epoch: usize, step: u64, e: &Error) -> Error {
    let summarize = |net: &crate::netspec::Network<T>| -> Vec<(f64, bool)> {
        net.params()
            .iter()
            .map(|p| (p.max_abs().as_f64(), p.is_finite()))
            .collect()
    };
    let dump = serde_json::json!({
        "error": e.to_string(),
        "variant": tr.cfg.variant,
        "epoch": epoch,
        "disc_step": step,
        "gen_steps": tr.gen_steps,
        "disc_params_max_abs_finite": summarize(&tr.models.disc),
        "gen_params_max_abs_finite": tr.models.gen.as_ref().map(summarize),
    });
    Error::TrainingAborted(dump.to_string())
}

/// Result of one grid cell.
#[derive(Debug)]
pub struct CellOutcome<T: Scalar> {
    pub record: RunRecord,
    pub best: Checkpoint,
    pub models: Models<T>,
}

/// Trains one (variant, size, seed) cell, selects the epoch with the best
/// validation accuracy (earliest on ties) and reports its test accuracy.
/// With `out_dir`, writes the best checkpoint, rolling checkpoints, the
/// record, and a dump on abort.
pub fn run_cell<T: Scalar>(
    spec: &ArchSpec,
    data: &ExperimentData,
    cfg: &TrainConfig,
    train_size: usize,
    out_dir: Option<&Path>,
    mut log: Option<&mut RoutingLog>,
) -> Result<CellOutcome<T>> {
    let started = Instant::now();
    let key = CellKey {
        variant: cfg.variant,
        train_size,
        seed: cfg.seed,
    };
    let root = cell_seed(cfg.seed, train_size);
    let slice = data.train_subset(train_size, root.derive("subset"))?;
    let mut tr = Trainer::<T>::new(spec, cfg.clone(), root)?;
    if let Some(d) = out_dir {
        std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    let meta = |epoch, acc| CheckpointMeta {
        variant: cfg.variant.name().into(),
        epoch,
        seed: cfg.seed,
        val_accuracy: Some(acc),
    };
    let chunk = cfg.schedule.eval_batch;
    let initial = evaluate_accuracy(&tr.models.disc, &data.train, &data.val.indices, chunk)?;
    let mut best = (
        0usize,
        initial,
        best_snapshot(&tr.models, meta(0, initial))?,
    );
    let mut epochs = Vec::new();
    let mut since_best = 0;
    for epoch in 1..=cfg.schedule.epochs {
        let mut m = match train_epoch(&mut tr, &data.train, &slice, epoch, log.as_deref_mut()) {
            Ok(m) => m,
            Err(e) => {
                if let Some(d) = out_dir {
                    let p = d.join("abort_dump.json");
                    let _ = std::fs::write(&p, e.to_string());
                }
                return Err(e);
            }
        };
        m.val_accuracy = evaluate_accuracy(&tr.models.disc, &data.train, &data.val.indices, chunk)?;
        log::info!(
            "{} epoch {epoch}: train {:.4} val {:.4} d {:.4} g {:.4}",
            key.dir_name(),
            m.train_accuracy,
            m.val_accuracy,
            m.disc.disc_objective,
            m.gen.gen_objective
        );
        if m.val_accuracy > best.1 {
            best = (
                epoch,
                m.val_accuracy,
                best_snapshot(&tr.models, meta(epoch, m.val_accuracy))?,
            );
            since_best = 0;
            if let Some(d) = out_dir {
                best.2.save(d.join("best.ckpt"))?;
            }
        } else {
            since_best += 1;
        }
        if let (Some(d), true) = (
            out_dir,
            cfg.schedule.checkpoint_every > 0 && epoch % cfg.schedule.checkpoint_every == 0,
        ) {
            best_snapshot(&tr.models, meta(epoch, m.val_accuracy))?.save(d.join("last.ckpt"))?;
        }
        epochs.push(m);
        if cfg.schedule.patience > 0 && since_best >= cfg.schedule.patience {
            log::info!("{}: early stop after epoch {epoch}", key.dir_name());
            break;
        }
    }
    let (best_epoch, best_val, ckpt) = best;
    let best_disc = ckpt.network::<T>(tr.models.disc.role())?;
    let test_idx: Vec<usize> = (0..data.test.len()).collect();
    let test_accuracy = evaluate_accuracy(&best_disc, &data.test, &test_idx, chunk)?;
    if let Some(d) = out_dir {
        if best_epoch == 0 {
            ckpt.save(d.join("best.ckpt"))?;
        }
    }
    let record = RunRecord {
        key,
        config: cfg.clone(),
        spec_name: spec.name.clone(),
        epochs,
        best_epoch,
        best_val_accuracy: best_val,
        test_accuracy,
        wall_seconds: started.elapsed().as_secs_f64(),
        train_class_histogram: slice.class_histogram.clone(),
    };
    if let Some(d) = out_dir {
        let p = d.join(RECORD_FILE);
        std::fs::write(&p, serde_json::to_vec_pretty(&record)?).map_err(|e| Error::io(&p, e))?;
    }
    Ok(CellOutcome {
        record,
        best: ckpt,
        models: tr.models,
    })
}

fn best_snapshot<T: Scalar>(m: &Models<T>, meta: CheckpointMeta) -> Result<Checkpoint> {
    match &m.gen {
        Some(g) => Checkpoint::capture(meta, &[&m.disc, g]),
        None => Checkpoint::capture(meta, &[&m.disc]),
    }
}

/// Cartesian grid of cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub variants: Vec<Variant>,
    pub train_sizes: Vec<usize>,
    pub seeds: Vec<u64>,
}

impl Grid {
    pub fn cells(&self) -> Vec<CellKey> {
        let mut out = Vec::new();
        for &train_size in &self.train_sizes {
            for &variant in &self.variants {
                for &seed in &self.seeds {
                    out.push(CellKey {
                        variant,
                        train_size,
                        seed,
                    });
                }
            }
        }
        out
    }
}

/// Directory of one cell inside a run directory.
pub fn cell_dir(run_dir: &Path, key: &CellKey) -> PathBuf {
    run_dir.join("cells").join(key.dir_name())
}

fn read_manifest(dir: &Path) -> BTreeSet<CellKey> {
    let Ok(text) = std::fs::read_to_string(dir.join(MANIFEST_FILE)) else {
        return BTreeSet::new();
    };
    text.lines()
        .filter_map(|l| serde_json::from_str(l).ok())
        .collect()
}

fn load_record(dir: &Path) -> Option<RunRecord> {
    serde_json::from_slice(&std::fs::read(dir.join(RECORD_FILE)).ok()?).ok()
}

/// Runs every grid cell not yet listed in `out_dir`'s manifest, using up to
/// `jobs` worker threads. A failing cell is reported and the grid continues.
/// Returns all records (resumed and new) in grid order, plus failures.
pub fn run_experiment<T: Scalar>(
    spec: &ArchSpec,
    data: &ExperimentData,
    grid: &Grid,
    schedule: &Schedule,
    out_dir: &Path,
    jobs: usize,
) -> Result<(Vec<RunRecord>, Vec<(CellKey, Error)>)> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let done = read_manifest(out_dir);
    let cells = grid.cells();
    let cell_dir = |k: &CellKey| cell_dir(out_dir, k);
    let mut records: Vec<Option<RunRecord>> = cells
        .iter()
        .map(|k| {
            if done.contains(k) {
                load_record(&cell_dir(k))
            } else {
                None
            }
        })
        .collect();
    let pending: Vec<usize> = (0..cells.len()).filter(|&i| records[i].is_none()).collect();
    log::info!(
        "{} cells, {} already complete",
        cells.len(),
        cells.len() - pending.len()
    );

    let next = Mutex::new(0usize);
    let results = Mutex::new(Vec::new());
    let manifest = Mutex::new(());
    let worker = || loop {
        let slot = {
            let mut n = next.lock().unwrap();
            let s = *n;
            *n += 1;
            s
        };
        let Some(&i) = pending.get(slot) else { break };
        let key = cells[i];
        let cfg = TrainConfig {
            variant: key.variant,
            seed: key.seed,
            schedule: schedule.clone(),
        };
        let dir = cell_dir(&key);
        let res =
            run_cell::<T>(spec, data, &cfg, key.train_size, Some(&dir), None).map(|o| o.record);
        if res.is_ok() {
            let _g = manifest.lock().unwrap();
            let line = serde_json::to_string(&key).expect("key serializes");
            let path = out_dir.join(MANIFEST_FILE);
            let appended = OpenOptions::new()
                .create(true)
                .append(true)
                .open(&path)
                .and_then(|mut f| writeln!(f, "{line}"));
            if let Err(e) = appended {
                log::error!("could not append to {}: {e}", path.display());
            }
        }
        results.lock().unwrap().push((i, res));
    };
    std::thread::scope(|s| {
        for _ in 0..jobs.max(1).min(pending.len().max(1)) {
            s.spawn(&worker);
        }
    });
    let mut failures = Vec::new();
    for (i, res) in results.into_inner().unwrap() {
        match res {
            Ok(r) => records[i] = Some(r),
            Err(e) => {
                log::error!("cell {} failed: {e}", cells[i].dir_name());
                failures.push((cells[i], e));
            }
        }
    }
    failures.sort_by_key(|f| f.0);
    Ok((records.into_iter().flatten().collect(), failures))
}

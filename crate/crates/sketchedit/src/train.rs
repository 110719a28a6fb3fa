//! Training driver: shuffled batch loader with prefetch, the step loop,
//! metrics CSV and atomic checkpoints with bit-exact resume.

use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::sync::Arc;
use std::thread;

use sketchedit_core::dataset::{epoch_batches, TrainingSample};
use sketchedit_core::model::{Discriminator, Generator};
use sketchedit_core::rng;
use sketchedit_core::training::{train_step, Batch, StepMetrics};
use sketchedit_core::Error as CoreError;

use crate::checkpoint::Checkpoint;
use crate::config::Config;
use crate::error::{AppError, Result};
use crate::shard::read_shards;

/// Seeded epoch permutations cut into full batches; batch `k` of the run is
/// batch `k mod B` of epoch `k / B`.
#[derive(Debug, Clone)]
pub struct Loader {
    samples: Arc<Vec<TrainingSample>>,
    batch: usize,
    seed: u64,
}

impl Loader {
    pub fn new(samples: Vec<TrainingSample>, batch: usize, seed: u64) -> Result<Self> {
        if samples.is_empty() {
            return Err(CoreError::InvalidArgument("dataset is empty".into()).into());
        }
        if batch == 0 || batch > samples.len() {
            return Err(CoreError::InvalidArgument(format!("batch {batch} does not fit {} samples", samples.len())).into());
        }
        Ok(Self { samples: Arc::new(samples), batch, seed })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.samples.len() / self.batch
    }

    pub fn epoch(&self, epoch: u64) -> Vec<Vec<usize>> {
        epoch_batches(self.samples.len(), self.batch, self.seed, epoch).expect("validated at construction")
    }

    pub fn indices(&self, step: u64) -> Vec<usize> {
        let b = self.batches_per_epoch() as u64;
        self.epoch(step / b).swap_remove((step % b) as usize)
    }

    pub fn batch(&self, step: u64) -> Result<Batch> {
        let refs: Vec<&TrainingSample> = self.indices(step).iter().map(|i| &self.samples[*i]).collect();
        Ok(Batch::new(&refs)?)
    }

    /// Batches for steps `start..end`, assembled on a worker thread a few
    /// steps ahead. Order is fixed by the permutation.
    pub fn prefetch(&self, start: u64, end: u64) -> mpsc::IntoIter<Result<Batch>> {
        let (tx, rx) = mpsc::sync_channel(2);
        let me = self.clone();
        thread::spawn(move || {
            for step in start..end {
                if tx.send(me.batch(step)).is_err() {
                    break;
                }
            }
        });
        rx.into_iter()
    }
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub shards: Vec<PathBuf>,
    pub config: Config,
    /// Step count to reach (not an increment).
    pub steps: u64,
    pub out: PathBuf,
    /// Continue from `out/latest.fsck` when present.
    pub resume: bool,
}

pub const METRICS_FILE: &str = "metrics.csv";
pub const LATEST: &str = "latest.fsck";
const METRICS_HEADER: &str = "step,d_loss,g_loss,rec,gp,drift";

pub fn checkpoint_path(out: &Path, step: u64) -> PathBuf {
    out.join(format!("step_{step:08}.fsck"))
}

fn save(ck: &Checkpoint, out: &Path) -> Result<()> {
    ck.save(&checkpoint_path(out, ck.state.step))?;
    ck.save(&out.join(LATEST))
}

/// Keeps the header and rows up to `step`.
fn truncate_metrics(path: &Path, step: u64) -> Result<()> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
        Err(e) => return Err(AppError::io(path, e)),
    };
    let mut kept = String::from(METRICS_HEADER);
    kept.push('\n');
    for line in text.lines().skip(1) {
        let s: Option<u64> = line.split(',').next().and_then(|v| v.parse().ok());
        if s.is_some_and(|s| s <= step) {
            kept.push_str(line);
            kept.push('\n');
        }
    }
    crate::atomic_write(path, kept.as_bytes())
}

pub fn metrics_row(m: &StepMetrics) -> String {
    format!("{},{},{},{},{},{}", m.step, m.d_loss, m.g_loss, m.rec, m.gp, m.drift)
}

/// Runs training to `opts.steps`, calling `on_step` after every step.
pub fn train(opts: &TrainOptions, mut on_step: impl FnMut(&StepMetrics)) -> Result<Checkpoint> {
    std::fs::create_dir_all(&opts.out).map_err(|e| AppError::io(&opts.out, e))?;
    let latest = opts.out.join(LATEST);
    let metrics = opts.out.join(METRICS_FILE);
    let mut ck = if opts.resume && latest.exists() {
        let ck = Checkpoint::load(&latest)?;
        if ck.config != opts.config {
            return Err(CoreError::ConfigMismatch("resumed checkpoint was trained with a different config".into()).into());
        }
        truncate_metrics(&metrics, ck.state.step)?;
        ck
    } else {
        let ck = Checkpoint::initial(opts.config.clone())?;
        truncate_metrics(&metrics, 0)?;
        save(&ck, &opts.out)?;
        ck
    };
    let gen = Generator::new(ck.config.generator())?;
    let disc = Discriminator::new(ck.config.discriminator())?;
    let tc = ck.config.training()?;
    if ck.state.step >= opts.steps {
        return Ok(ck);
    }
    let loader = Loader::new(read_shards(&opts.shards)?, tc.batch, rng::derive(tc.seed, 20))?;
    if loader.batch(0)?.side != ck.config.size {
        return Err(CoreError::ConfigMismatch("shard side differs from the configured size".into()).into());
    }
    let mut log = OpenOptions::new().append(true).open(&metrics).map_err(|e| AppError::io(&metrics, e))?;
    for batch in loader.prefetch(ck.state.step, opts.steps) {
        let m = train_step(&mut ck.state, &gen, &disc, &batch?, &tc)?;
        writeln!(log, "{}", metrics_row(&m)).map_err(|e| AppError::io(&metrics, e))?;
        on_step(&m);
        if tc.checkpoint_every > 0 && ck.state.step % tc.checkpoint_every == 0 || ck.state.step == opts.steps {
            log.flush().map_err(|e| AppError::io(&metrics, e))?;
            save(&ck, &opts.out)?;
        }
    }
    Ok(ck)
}

//! Training loop, evaluation entry points and the ablation runner.

use std::path::{Path, PathBuf};
use std::time::Instant;

use profiti_autodiff::{adam_step, AdamConfig, AdamState, ParamGrads, ParamStore};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::data::{load_jsonl, ChannelStats, SeriesInstance};
use crate::error::{ProfitiError, Result};
use crate::flow::attention::AttnKind;
use crate::metrics::{evaluate_model, njnll, EvalConfig, MetricReport};
use crate::model::{ModelConfig, Profiti, VariantFlags};
use crate::synthetic::{generate_synthetic, SyntheticConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Synthetic(SyntheticConfig),
    Path(PathBuf),
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic(SyntheticConfig::default())
    }
}

impl DataSource {
    pub fn load(&self) -> Result<Vec<SeriesInstance>> {
        let data = match self {
            DataSource::Synthetic(cfg) => generate_synthetic(cfg)?,
            DataSource::Path(p) => load_jsonl(p)?,
        };
        for s in &data {
            s.validate()?;
        }
        Ok(data)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub data: DataSource,
    /// Train, validation and test fractions.
    pub split: [f64; 3],
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub model: ModelConfig,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    /// Worker threads for per-instance gradients; results do not depend on it.
    pub threads: usize,
    /// Global gradient-norm clip; `None` disables clipping.
    pub grad_clip: Option<f64>,
    pub eval: EvalConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            data: DataSource::default(),
            split: [0.7, 0.1, 0.2],
            epochs: 50,
            batch_size: 32,
            lr: 1e-3,
            seed: 0,
            model: ModelConfig::default(),
            patience: 10,
            threads: 1,
            grad_clip: Some(10.0),
            eval: EvalConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.split.iter().any(|s| !(*s >= 0.0)) || (self.split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(ProfitiError::Config(format!(
                "split ratios must be non-negative and sum to 1, got {:?}",
                self.split
            )));
        }
        if self.batch_size == 0 {
            return Err(ProfitiError::Config("batch_size must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(ProfitiError::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if self.threads == 0 {
            return Err(ProfitiError::Config("threads must be at least 1".into()));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return Err(ProfitiError::Config(format!("grad_clip must be positive, got {c}")));
            }
        }
        Ok(())
    }

    /// Apply `PROFITI_SEED` and `PROFITI_THREADS` style overrides.
    pub fn apply_overrides(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<()> {
        if let Some(v) = get("PROFITI_SEED") {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| ProfitiError::Config(format!("PROFITI_SEED is not an integer: `{v}`")))?;
        }
        if let Some(v) = get("PROFITI_THREADS") {
            self.threads = v
                .trim()
                .parse()
                .map_err(|_| ProfitiError::Config(format!("PROFITI_THREADS is not an integer: `{v}`")))?;
        }
        Ok(())
    }
}

/// Train, validation and test instances.
#[derive(Clone, Debug)]
pub struct Splits {
    pub train: Vec<SeriesInstance>,
    pub val: Vec<SeriesInstance>,
    pub test: Vec<SeriesInstance>,
}

pub fn split_dataset(mut data: Vec<SeriesInstance>, ratios: [f64; 3], seed: u64) -> Result<Splits> {
    if data.is_empty() {
        return Err(ProfitiError::EmptyDataset);
    }
    data.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = data.len();
    let n_train = (ratios[0] * n as f64).round() as usize;
    let n_val = ((ratios[1] * n as f64).round() as usize).min(n - n_train);
    let test = data.split_off(n_train + n_val);
    let val = data.split_off(n_train);
    if data.is_empty() || val.is_empty() || test.is_empty() {
        return Err(ProfitiError::Config(format!(
            "split {ratios:?} of {n} instances leaves an empty partition"
        )));
    }
    Ok(Splits { train: data, val, test })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean training loss over the epoch; absent for the initial evaluation.
    pub train_njnll: Option<f64>,
    pub val_njnll: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: TrainConfig,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stop_reason: String,
    pub report: MetricReport,
    pub checkpoint: Option<PathBuf>,
}

impl RunRecord {
    /// Copy with wall-clock fields zeroed, for determinism comparisons.
    pub fn without_timing(&self) -> RunRecord {
        let mut r = self.clone();
        for e in &mut r.epochs {
            e.seconds = 0.0;
        }
        r
    }
}

/// Mean loss and mean parameter gradient over a batch. Each instance has its
/// own graph; the reduction runs in batch order.
pub fn batch_gradients(model: &Profiti, batch: &[&SeriesInstance]) -> Result<(f64, ParamGrads)> {
    let per: Vec<(f64, ParamGrads)> = batch
        .par_iter()
        .map(|s| {
            let (loss, g) = model.loss_and_grads(s)?;
            if !loss.is_finite() {
                return Err(ProfitiError::Diverged(format!("loss of series `{}` is {loss}", s.id)));
            }
            Ok((loss, g))
        })
        .collect::<Result<_>>()?;
    let mut total = ParamGrads::zeros_like(model.store());
    let mut loss = 0.0;
    for (l, g) in &per {
        loss += l;
        total.accumulate(g);
    }
    let inv = 1.0 / batch.len() as f64;
    total.scale(inv);
    Ok((loss * inv, total))
}

fn pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| ProfitiError::Config(format!("cannot start {threads} worker threads: {e}")))
}

fn channel_count(data: &[SeriesInstance]) -> usize {
    data.iter().map(|s| s.channels).max().unwrap_or(0)
}

/// Train a model on an already split dataset.
pub fn train_on(cfg: &TrainConfig, splits: &Splits, out_dir: Option<&Path>) -> Result<(RunRecord, Profiti)> {
    cfg.validate()?;
    let pool = pool(cfg.threads)?;
    pool.install(|| train_inner(cfg, splits, out_dir))
}

/// Load the configured data, split it, train, and evaluate on the test part.
pub fn train(cfg: &TrainConfig, out_dir: Option<&Path>) -> Result<(RunRecord, Profiti)> {
    cfg.validate()?;
    let splits = split_dataset(cfg.data.load()?, cfg.split, cfg.seed)?;
    train_on(cfg, &splits, out_dir)
}

const DIVERGENCE_EPOCHS: usize = 5;

fn train_inner(cfg: &TrainConfig, splits: &Splits, out_dir: Option<&Path>) -> Result<(RunRecord, Profiti)> {
    let all: Vec<&SeriesInstance> = splits.train.iter().chain(&splits.val).chain(&splits.test).collect();
    let channels = all.iter().map(|s| s.channels).max().unwrap_or(0);
    let stats = ChannelStats::from_instances(&splits.train, channels);
    let mut model = Profiti::new(cfg.model.clone(), channels, stats, cfg.seed)?;
    let adam = AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    };
    let mut state = AdamState::new(model.store());

    let start = Instant::now();
    let initial = njnll(&splits.val, &model)?;
    let mut epochs = vec![EpochRecord {
        epoch: 0,
        train_njnll: None,
        val_njnll: initial,
        seconds: start.elapsed().as_secs_f64(),
    }];
    log::info!("epoch 0: val njNLL {initial:.4}");
    let mut best = (initial, 0usize, model.store().clone());
    let mut bad_epochs = 0;
    let mut diverging = 0;
    let mut stop_reason = format!("completed {} epochs", cfg.epochs);
    let diverge_at = initial + 10.0 * initial.abs().max(1.0);
    let mut order: Vec<usize> = (0..splits.train.len()).collect();

    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(epoch as u64);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&SeriesInstance> = chunk.iter().map(|&i| &splits.train[i]).collect();
            let (loss, mut grads) = batch_gradients(&model, &batch)?;
            if let Some(clip) = cfg.grad_clip {
                let norm = grads.global_norm();
                if norm > clip {
                    grads.scale(clip / norm);
                }
            }
            adam_step(model.store_mut(), &grads, &mut state, &adam)?;
            loss_sum += loss * batch.len() as f64;
        }
        let train_loss = loss_sum / splits.train.len() as f64;
        let val = njnll(&splits.val, &model)?;
        epochs.push(EpochRecord {
            epoch,
            train_njnll: Some(train_loss),
            val_njnll: val,
            seconds: start.elapsed().as_secs_f64(),
        });
        log::info!("epoch {epoch}: train njNLL {train_loss:.4}, val njNLL {val:.4}");

        if val > diverge_at {
            diverging += 1;
            if diverging >= DIVERGENCE_EPOCHS {
                return Err(ProfitiError::Diverged(format!(
                    "validation njNLL above {diverge_at:.4} for {DIVERGENCE_EPOCHS} epochs (now {val:.4})"
                )));
            }
        } else {
            diverging = 0;
        }
        if val < best.0 {
            best = (val, epoch, model.store().clone());
            bad_epochs = 0;
        } else {
            bad_epochs += 1;
            if bad_epochs >= cfg.patience {
                stop_reason = format!("early stop after {epoch} epochs");
                break;
            }
        }
    }

    let (_, best_epoch, params) = best;
    restore(&mut model, params);
    let report = evaluate_model(&splits.test, &model, &cfg.eval)?;
    let checkpoint = match out_dir {
        Some(dir) => {
            let path = dir.join("ckpt");
            checkpoint::save(&model, &path)?;
            Some(path)
        }
        None => None,
    };
    let record = RunRecord {
        config: cfg.clone(),
        epochs,
        best_epoch,
        stop_reason,
        report,
        checkpoint,
    };
    if let Some(dir) = out_dir {
        let path = dir.join("run.json");
        std::fs::write(&path, serde_json::to_string_pretty(&record)?).map_err(|e| ProfitiError::io(&path, e))?;
    }
    Ok((record, model))
}

fn restore(model: &mut Profiti, params: ParamStore) {
    *model.store_mut() = params;
}

/// Evaluate a saved checkpoint on a dataset file.
pub fn evaluate(ckpt: impl AsRef<Path>, data: impl AsRef<Path>, cfg: &EvalConfig) -> Result<MetricReport> {
    let model = checkpoint::load(ckpt)?;
    let data = load_jsonl(data)?;
    for s in &data {
        s.validate()?;
    }
    if channel_count(&data) > model.channels() {
        return Err(ProfitiError::Config(format!(
            "dataset has {} channels, checkpoint was trained on {}",
            channel_count(&data),
            model.channels()
        )));
    }
    evaluate_model(&data, &model, cfg)
}

/// The six variants compared by the ablation runner.
pub fn ablation_variants() -> Vec<VariantFlags> {
    let v = |use_sita, attn_kind, use_shiesh| VariantFlags {
        use_sita,
        attn_kind,
        use_shiesh,
    };
    vec![
        v(true, AttnKind::Tri, true),
        v(false, AttnKind::Tri, true),
        v(true, AttnKind::Tri, false),
        v(false, AttnKind::Tri, false),
        v(true, AttnKind::Reg, true),
        v(true, AttnKind::Itrans, true),
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub flags: VariantFlags,
    pub best_val_njnll: f64,
    pub test_njnll: f64,
    pub best_epoch: usize,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn to_table(&self) -> String {
        let mut s = format!("{:<22} {:>12} {:>12}\n", "variant", "test njNLL", "val njNLL");
        for r in &self.rows {
            s.push_str(&format!("{:<22} {:>12.4} {:>12.4}\n", r.variant, r.test_njnll, r.best_val_njnll));
        }
        s
    }
}

/// Train each variant on the same data split and seed.
pub fn run_ablation_variants(base: &TrainConfig, variants: &[VariantFlags]) -> Result<AblationTable> {
    base.validate()?;
    let splits = split_dataset(base.data.load()?, base.split, base.seed)?;
    let mut rows = Vec::with_capacity(variants.len());
    for flags in variants {
        let mut cfg = base.clone();
        cfg.model.flags = *flags;
        let start = Instant::now();
        let (rec, _) = train_on(&cfg, &splits, None)?;
        let best = rec.epochs.iter().find(|e| e.epoch == rec.best_epoch).map(|e| e.val_njnll).unwrap_or(f64::NAN);
        log::info!("{}: test njNLL {:.4}", flags.label(), rec.report.njnll.mean);
        rows.push(AblationRow {
            variant: flags.label(),
            flags: *flags,
            best_val_njnll: best,
            test_njnll: rec.report.njnll.mean,
            best_epoch: rec.best_epoch,
            seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok(AblationTable { rows })
}

pub fn run_ablation(base: &TrainConfig) -> Result<AblationTable> {
    run_ablation_variants(base, &ablation_variants())
}

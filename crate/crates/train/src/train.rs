//! Minibatch training with per-epoch validation, CSV logging and
//! resumable checkpoints.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use lkm_core::unet::{build_model, load_checkpoint, save_checkpoint, Model};
use lkm_core::ParamStore;
use lkm_tensor::{Precision, Tape, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{RunConfig, Timing};
use crate::data::{generate_range, Scene};
use crate::loss::seg_loss;
use crate::metrics::foreground_scores;
use crate::optim::{adam_step, AdamState};
use crate::{Result, TrainError};

pub const CSV_HEADER: &str = "epoch,loss,dsc,nsd,seconds,seed,config_hash";
pub const METRICS_FILE: &str = "metrics.csv";
pub const BEST_FILE: &str = "best.ckpt";
pub const LAST_FILE: &str = "last.ckpt";
/// Canonical run configuration written next to the checkpoints.
pub const RUN_CONFIG_FILE: &str = "run.cfg";

const EPOCH_KEY: &str = "train.epoch";
const BEST_KEY: &str = "train.best_dsc";
const BEST_EPOCH_KEY: &str = "train.best_epoch";

/// One CSV row. Epoch 0 evaluates the untrained model.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub epoch: usize,
    pub loss: f64,
    pub dsc: f64,
    pub nsd: f64,
    pub seconds: f64,
    pub seed: u64,
    pub config_hash: String,
}

impl RunRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.6},{:.6},{:.6},{:.3},{},{}",
            self.epoch, self.loss, self.dsc, self.nsd, self.seconds, self.seed, self.config_hash
        )
    }

    pub fn parse_row(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.trim().split(',').collect();
        let bad = || TrainError::Config(format!("malformed metrics row {line:?}"));
        if f.len() != 7 {
            return Err(bad());
        }
        Ok(Self {
            epoch: f[0].parse().map_err(|_| bad())?,
            loss: f[1].parse().map_err(|_| bad())?,
            dsc: f[2].parse().map_err(|_| bad())?,
            nsd: f[3].parse().map_err(|_| bad())?,
            seconds: f[4].parse().map_err(|_| bad())?,
            seed: f[5].parse().map_err(|_| bad())?,
            config_hash: f[6].to_string(),
        })
    }
}

/// Training and validation scenes. Validation scenes follow the training
/// scenes in the generator's index space, so the splits never overlap.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub train: Vec<Scene>,
    pub val: Vec<Scene>,
}

impl Dataset {
    pub fn generate(cfg: &RunConfig) -> Result<Self> {
        Ok(Self {
            train: generate_range(&cfg.scene, 0, cfg.train_count)?,
            val: generate_range(&cfg.scene, cfg.train_count as u64, cfg.val_count)?,
        })
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub records: Vec<RunRecord>,
    /// Row with the highest validation DSC (earliest on ties).
    pub best: RunRecord,
    /// Model after the last epoch.
    pub model: Model,
    pub wall_seconds: f64,
}

impl TrainOutcome {
    pub fn last(&self) -> &RunRecord {
        self.records.last().expect("at least the epoch-0 row")
    }
}

/// Copy of `store` with every tensor stored at `precision`.
pub fn cast(store: &ParamStore, precision: Precision) -> ParamStore {
    let mut out = ParamStore::new();
    for (name, t) in store.iter() {
        out.insert(name, t.with_precision(precision));
    }
    out
}

fn input(scene: &Scene, precision: Precision) -> Tensor {
    scene.image.with_precision(precision)
}

/// Loss and parameter gradients for one scene.
pub fn sample_gradients(model: &Model, scene: &Scene, precision: Precision) -> Result<(f64, BTreeMap<String, Vec<f64>>)> {
    let tape = Tape::new();
    let bound = model.params.bind(&tape);
    let logits = model.forward_with(&bound, &input(scene, precision))?;
    let loss = seg_loss(&logits, &scene.mask)?;
    let grads = tape.backward(&loss)?;
    let mut out = BTreeMap::new();
    for (name, t) in bound.iter() {
        let g = grads.get_data(t).unwrap_or_else(|| vec![0.0; t.numel()]);
        out.insert(name.to_string(), g);
    }
    Ok((loss.item(), out))
}

/// Mean training loss without updating anything.
pub fn mean_loss(model: &Model, scenes: &[Scene], precision: Precision) -> Result<f64> {
    let losses: Vec<f64> = scenes
        .par_iter()
        .map(|s| Ok(seg_loss(&model.forward(&input(s, precision))?, &s.mask)?.item()))
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

/// Mean foreground DSC and NSD over `scenes`, averaged per scene.
pub fn evaluate(model: &Model, scenes: &[Scene], tau: f64, precision: Precision) -> Result<(f64, f64)> {
    let shape = &model.cfg.extents;
    let scores: Vec<(f64, f64)> = scenes
        .par_iter()
        .map(|s| {
            let pred = model.predict_mask(&input(s, precision))?;
            foreground_scores(&pred, &s.mask, shape, model.cfg.classes, tau)
        })
        .collect::<Result<_>>()?;
    let n = scores.len() as f64;
    Ok((scores.iter().map(|s| s.0).sum::<f64>() / n, scores.iter().map(|s| s.1).sum::<f64>() / n))
}

/// Run `f` on a pool capped by `LKMSEG_THREADS` (unset or 0: all cores).
pub fn with_thread_cap<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T> {
    let threads = match std::env::var("LKMSEG_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| TrainError::Config(format!("LKMSEG_THREADS must be a count, got {v:?}")))?,
        Err(_) => 0,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| TrainError::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

struct Progress {
    first_epoch: usize,
    records: Vec<RunRecord>,
    model: Model,
    adam: AdamState,
    best: Option<(usize, f64)>,
}

fn fresh(cfg: &RunConfig) -> Result<Progress> {
    let mut model = build_model(&cfg.model, cfg.seed)?;
    model.params = cast(&model.params, cfg.precision);
    Ok(Progress { first_epoch: 0, records: Vec::new(), model, adam: AdamState::default(), best: None })
}

fn resumed(cfg: &RunConfig, out: &Path) -> Result<Option<Progress>> {
    let last = out.join(LAST_FILE);
    if !last.exists() {
        return Ok(None);
    }
    let (mut model, records) = load_checkpoint(&last, &cfg.model)?;
    model.params = cast(&model.params, cfg.precision);
    let done = records.get(EPOCH_KEY)?.item() as usize;
    let best = (records.get(BEST_EPOCH_KEY)?.item() as usize, records.get(BEST_KEY)?.item());
    let adam = AdamState::from_records(&records)?;
    let text = fs::read_to_string(out.join(METRICS_FILE))?;
    let mut rows = Vec::new();
    for line in text.lines().skip(1).filter(|l| !l.trim().is_empty()) {
        let r = RunRecord::parse_row(line)?;
        if r.config_hash != cfg.hash() || r.seed != cfg.seed {
            return Err(TrainError::Config(format!(
                "{} was written by a different run configuration",
                out.join(METRICS_FILE).display()
            )));
        }
        if r.epoch <= done {
            rows.push(r);
        }
    }
    if rows.len() != done + 1 {
        return Err(TrainError::Config(format!("metrics.csv lacks rows for the {done} completed epochs")));
    }
    Ok(Some(Progress { first_epoch: done + 1, records: rows, model, adam, best: Some(best) }))
}

fn write_csv(path: &Path, records: &[RunRecord]) -> Result<()> {
    let mut text = format!("{CSV_HEADER}\n");
    for r in records {
        text.push_str(&r.csv_row());
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

fn append_csv(path: &Path, r: &RunRecord) -> Result<()> {
    let mut f = fs::OpenOptions::new().append(true).open(path)?;
    writeln!(f, "{}", r.csv_row())?;
    Ok(())
}

fn save(path: &Path, p: &Progress, epoch: usize) -> Result<()> {
    let mut records = ParamStore::new();
    p.adam.to_records(&mut records);
    let (best_epoch, best) = p.best.unwrap_or((0, 0.0));
    records.insert(EPOCH_KEY, Tensor::scalar(epoch as f64));
    records.insert(BEST_KEY, Tensor::scalar(best));
    records.insert(BEST_EPOCH_KEY, Tensor::scalar(best_epoch as f64));
    save_checkpoint(path, &p.model, &records)?;
    Ok(())
}

/// One optimization epoch over `scenes` in a seeded order; returns the
/// mean per-sample loss seen before each update.
fn run_epoch(cfg: &RunConfig, p: &mut Progress, scenes: &[Scene], epoch: usize) -> Result<f64> {
    let mut order: Vec<usize> = (0..scenes.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(epoch as u64);
    order.shuffle(&mut rng);
    let mut total = 0.0;
    for batch in order.chunks(cfg.optim.batch_size) {
        let model = &p.model;
        let results: Vec<(f64, BTreeMap<String, Vec<f64>>)> = batch
            .par_iter()
            .map(|&i| sample_gradients(model, &scenes[i], cfg.precision))
            .collect::<Result<_>>()?;
        let scale = 1.0 / batch.len() as f64;
        let mut sum: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for (loss, grads) in &results {
            total += loss;
            for (name, g) in grads {
                let acc = sum.entry(name.clone()).or_insert_with(|| vec![0.0; g.len()]);
                acc.iter_mut().zip(g).for_each(|(a, v)| *a += v);
            }
        }
        sum.values_mut().for_each(|g| g.iter_mut().for_each(|v| *v *= scale));
        let mut params = p.model.params.clone();
        adam_step(&mut params, &sum, &mut p.adam, &cfg.optim)?;
        p.model.params = cast(&params, cfg.precision);
    }
    Ok(total / scenes.len() as f64)
}

/// Train on `data`. With `out`, rows stream into `metrics.csv` and the
/// best and last checkpoints plus `run.cfg` are kept there; with `resume`
/// an existing `last.ckpt` is continued bit-exactly.
pub fn train_on(cfg: &RunConfig, data: &Dataset, out: Option<&Path>, resume: bool) -> Result<TrainOutcome> {
    cfg.validate()?;
    let start = Instant::now();
    let wall = |t: &Instant| if cfg.timing == Timing::Wall { t.elapsed().as_secs_f64() } else { 0.0 };
    let mut p = match (out, resume) {
        (Some(dir), true) => match resumed(cfg, dir)? {
            Some(p) => p,
            None => fresh(cfg)?,
        },
        _ => fresh(cfg)?,
    };
    let csv: Option<PathBuf> = out.map(|d| d.join(METRICS_FILE));
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(RUN_CONFIG_FILE), cfg.canonical())?;
        write_csv(csv.as_ref().unwrap(), &p.records)?;
    }
    for epoch in p.first_epoch..=cfg.optim.epochs {
        let tick = Instant::now();
        let loss = if epoch == 0 {
            mean_loss(&p.model, &data.train, cfg.precision)?
        } else {
            run_epoch(cfg, &mut p, &data.train, epoch)?
        };
        let (dsc, nsd) = evaluate(&p.model, &data.val, cfg.nsd_tau, cfg.precision)?;
        let record = RunRecord {
            epoch,
            loss,
            dsc,
            nsd,
            seconds: wall(&tick),
            seed: cfg.seed,
            config_hash: cfg.hash(),
        };
        let improved = p.best.is_none_or(|(_, b)| dsc > b);
        if improved {
            p.best = Some((epoch, dsc));
        }
        if let Some(dir) = out {
            append_csv(csv.as_ref().unwrap(), &record)?;
            if improved {
                save(&dir.join(BEST_FILE), &p, epoch)?;
            }
            save(&dir.join(LAST_FILE), &p, epoch)?;
        }
        p.records.push(record);
    }
    let best_epoch = p.best.map(|b| b.0).unwrap_or(0);
    let best = p.records.iter().find(|r| r.epoch == best_epoch).cloned().unwrap_or_else(|| p.records[0].clone());
    let outcome = TrainOutcome { records: p.records, best, model: p.model, wall_seconds: start.elapsed().as_secs_f64() };
    if let Some(dir) = out {
        fs::write(dir.join("report.md"), training_report(cfg, &outcome))?;
    }
    Ok(outcome)
}

/// Generate the data, then [`train_on`].
pub fn train(cfg: &RunConfig, out: &Path, resume: bool) -> Result<TrainOutcome> {
    let data = Dataset::generate(cfg)?;
    train_on(cfg, &data, Some(out), resume)
}

fn training_report(cfg: &RunConfig, o: &TrainOutcome) -> String {
    let last = o.last();
    format!(
        "# Training run\n\n\
         Config hash `{}`, seed {}, {} training and {} validation scenes.\n\n\
         | | epoch | loss | DSC | NSD |\n|---|---|---|---|---|\n\
         | best | {} | {:.4} | {:.4} | {:.4} |\n\
         | last | {} | {:.4} | {:.4} | {:.4} |\n\n\
         Wall time {:.1} s. The full configuration is in `{RUN_CONFIG_FILE}`.\n",
        cfg.hash(),
        cfg.seed,
        cfg.train_count,
        cfg.val_count,
        o.best.epoch,
        o.best.loss,
        o.best.dsc,
        o.best.nsd,
        last.epoch,
        last.loss,
        last.dsc,
        last.nsd,
        o.wall_seconds
    )
}

/// Run config stored next to a checkpoint.
pub fn config_beside(checkpoint: &Path) -> Result<RunConfig> {
    let path = checkpoint.parent().unwrap_or(Path::new(".")).join(RUN_CONFIG_FILE);
    if !path.exists() {
        return Err(TrainError::Config(format!("{} not found; pass --config", path.display())));
    }
    RunConfig::load(&path)
}

/// Load a checkpoint built for `cfg`.
pub fn load_model(path: &Path, cfg: &RunConfig) -> Result<Model> {
    let (mut model, _) = load_checkpoint(path, &cfg.model)?;
    model.params = cast(&model.params, cfg.precision);
    Ok(model)
}

//! `lkmseg`: train, evaluate, sweep and inspect desk-scale LKM-UNet models.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use lkm_erf::pgm::write_pgm;
use lkm_erf::{compute_erf_averaged, export_erf, Target};
use lkm_train::config::{parse_precision, parse_schedule};
use lkm_train::data::{generate_range, Scene};
use lkm_train::sweep::{ablation_sweep, kernel_sweep, DESK_SCHEDULES};
use lkm_train::train::{config_beside, evaluate, load_model, train, with_thread_cap, BEST_FILE};
use lkm_train::RunConfig;

#[derive(Parser)]
#[command(name = "lkmseg", version, about = "Desk-scale LKM-UNet segmentation on synthetic scenes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Flat `key = value` run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Output directory (or file for `erf`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// f32 or f64 storage.
    #[arg(long)]
    precision: Option<String>,
    /// Per-stage kernels, e.g. `8,4,4` or `8x8,4x4,4x4`.
    #[arg(long)]
    kernel_schedule: Option<String>,
    #[arg(long)]
    no_pim: bool,
    #[arg(long)]
    no_pam: bool,
    #[arg(long)]
    no_bim: bool,
}

impl Common {
    fn run_config(&self, base: Option<RunConfig>) -> Result<RunConfig> {
        let mut cfg = match (&self.config, base) {
            (Some(path), _) => RunConfig::load(path).with_context(|| format!("reading {}", path.display()))?,
            (None, Some(cfg)) => cfg,
            (None, None) => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(e) = self.epochs {
            cfg.optim.epochs = e;
        }
        if let Some(p) = &self.precision {
            cfg.precision = parse_precision(p)?;
        }
        if let Some(k) = &self.kernel_schedule {
            cfg.model.kernel_schedule = parse_schedule(k, cfg.model.extents.len())?;
        }
        cfg.model.use_pim &= !self.no_pim;
        cfg.model.use_pam &= !self.no_pam;
        cfg.model.use_bim &= !self.no_bim;
        cfg.validate()?;
        Ok(cfg)
    }

    fn out_or(&self, default: &str) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from(default))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train one model; writes metrics.csv, report.md, checkpoints and run.cfg.
    Train {
        #[command(flatten)]
        common: Common,
        /// Continue from `<out>/last.ckpt` if present.
        #[arg(long)]
        resume: bool,
    },
    /// Score a checkpoint on the validation scenes and export masks.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Defaults to `<out>/best.ckpt`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Validation scenes to export as PGM.
        #[arg(long, default_value_t = 4)]
        export: usize,
    },
    /// Train the eight PiM/PaM/BiM combinations on shared data.
    Ablate {
        #[command(flatten)]
        common: Common,
    },
    /// Train one model per kernel schedule.
    Kernels {
        #[command(flatten)]
        common: Common,
        /// Semicolon-separated schedules; defaults to `2,2,2;4,2,2;8,4,4`.
        #[arg(long)]
        schedules: Option<String>,
    },
    /// Effective receptive field of a checkpoint as a PGM.
    Erf {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// `center` or `y,x`.
        #[arg(long, default_value = "center")]
        target: String,
        /// Average over this many validation scenes.
        #[arg(long, default_value_t = 1)]
        average: usize,
    },
    /// Write synthetic scenes and masks as PGM.
    GenData {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 8)]
        count: usize,
    },
}

/// Min-max scaled greyscale of a `[1, H, W]` image.
fn image_pgm(path: &Path, scene: &Scene) -> Result<()> {
    let (h, w) = (scene.image.shape()[1], scene.image.shape()[2]);
    let d = scene.image.data();
    let (lo, hi) = d.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let px: Vec<u8> = d.iter().map(|v| ((v - lo) / span * 255.0).round() as u8).collect();
    write_pgm(path, w, h, &px)?;
    Ok(())
}

/// Labels scaled by `floor(255 / (K − 1))`.
fn mask_pgm(path: &Path, mask: &[u8], shape: &[usize], classes: usize) -> Result<()> {
    let step = (255 / (classes - 1)) as u8;
    let px: Vec<u8> = mask.iter().map(|&l| l * step).collect();
    write_pgm(path, shape[1], shape[0], &px)?;
    Ok(())
}

fn validation(cfg: &RunConfig, count: usize) -> Result<Vec<Scene>> {
    Ok(generate_range(&cfg.scene, cfg.train_count as u64, count)?)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { common, resume } => {
            let cfg = common.run_config(None)?;
            let out = common.out_or("runs/train");
            let o = train(&cfg, &out, resume)?;
            let last = o.last();
            println!(
                "epoch {}: loss {:.4}, DSC {:.4}, NSD {:.4} (best DSC {:.4} at epoch {}); wrote {}",
                last.epoch,
                last.loss,
                last.dsc,
                last.nsd,
                o.best.dsc,
                o.best.epoch,
                out.display()
            );
        }
        Command::Eval { common, checkpoint, export } => {
            let out = common.out_or("runs/train");
            let ckpt = checkpoint.unwrap_or_else(|| out.join(BEST_FILE));
            let cfg = common.run_config(Some(config_beside(&ckpt)?))?;
            let model = load_model(&ckpt, &cfg).with_context(|| format!("loading {}", ckpt.display()))?;
            let val = validation(&cfg, cfg.val_count)?;
            let (dsc, nsd) = evaluate(&model, &val, cfg.nsd_tau, cfg.precision)?;
            println!("DSC {dsc:.4}, NSD {nsd:.4} over {} validation scenes", val.len());
            let dir = out.join("eval");
            std::fs::create_dir_all(&dir)?;
            for (i, s) in val.iter().take(export).enumerate() {
                let pred = model.predict_mask(&s.image.with_precision(cfg.precision))?;
                image_pgm(&dir.join(format!("input_{i:03}.pgm")), s)?;
                mask_pgm(&dir.join(format!("pred_{i:03}.pgm")), &pred, &cfg.scene.size, cfg.scene.classes)?;
                mask_pgm(&dir.join(format!("truth_{i:03}.pgm")), &s.mask, &cfg.scene.size, cfg.scene.classes)?;
            }
        }
        Command::Ablate { common } => {
            let cfg = common.run_config(None)?;
            let out = common.out_or("runs/ablation");
            for row in ablation_sweep(&cfg, &out)? {
                let last = row.outcome.last();
                println!("{:<16} DSC {:.4} NSD {:.4}", row.name, last.dsc, last.nsd);
            }
            println!("wrote {}", out.join("ablation.md").display());
        }
        Command::Kernels { common, schedules } => {
            let cfg = common.run_config(None)?;
            let out = common.out_or("runs/kernels");
            let rank = cfg.model.extents.len();
            let schedules = match schedules {
                Some(s) => s.split(';').map(|k| parse_schedule(k, rank)).collect::<Result<Vec<_>, _>>()?,
                None => DESK_SCHEDULES
                    .iter()
                    .map(|k| parse_schedule(&k.map(|v| v.to_string()).join(","), rank))
                    .collect::<Result<Vec<_>, _>>()?,
            };
            for row in kernel_sweep(&cfg, &schedules, &out)? {
                let last = row.outcome.last();
                println!(
                    "{:<12} DSC {:.4} NSD {:.4} {:.1} s",
                    row.name, last.dsc, last.nsd, row.outcome.wall_seconds
                );
            }
            println!("wrote {}", out.join("kernels.md").display());
        }
        Command::Erf { common, checkpoint, target, average } => {
            if average == 0 {
                bail!("--average must be at least 1");
            }
            let base = match common.config {
                Some(_) => None,
                None => Some(config_beside(&checkpoint)?),
            };
            let cfg = common.run_config(base)?;
            let model = load_model(&checkpoint, &cfg).with_context(|| format!("loading {}", checkpoint.display()))?;
            let target: Target = target.parse()?;
            let inputs: Vec<_> =
                validation(&cfg, average)?.into_iter().map(|s| s.image.with_precision(cfg.precision)).collect();
            let map = compute_erf_averaged(&model, &inputs, &target)?;
            let out = common.out.clone().unwrap_or_else(|| PathBuf::from("erf.pgm"));
            export_erf(&map, &out)?;
            println!(
                "ERF support {} px above 1e-6, {} px above 1e-2; wrote {}",
                map.support_count(1e-6),
                map.support_count(1e-2),
                out.display()
            );
        }
        Command::GenData { common, count } => {
            let cfg = common.run_config(None)?;
            let out = common.out_or("runs/data");
            std::fs::create_dir_all(&out)?;
            for (i, s) in generate_range(&cfg.scene, 0, count)?.iter().enumerate() {
                image_pgm(&out.join(format!("image_{i:03}.pgm")), s)?;
                mask_pgm(&out.join(format!("mask_{i:03}.pgm")), &s.mask, &cfg.scene.size, cfg.scene.classes)?;
            }
            println!("wrote {count} scenes to {}", out.display());
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    with_thread_cap(move || run(cli))?
}

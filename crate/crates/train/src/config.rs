//! Flat `key = value` run configuration.
//!
//! Blank lines and `#` comments are ignored; every other line must set a
//! known key. Later lines override earlier ones. Lists are comma-separated.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use lkm_core::lm::KernelSpec;
use lkm_core::unet::ModelConfig;
use lkm_tensor::Precision;
use sha2::{Digest, Sha256};

use crate::data::SceneConfig;
use crate::optim::OptimConfig;
use crate::{Result, TrainError};

/// Whether the `seconds` column records wall time. Off keeps CSVs
/// byte-identical across runs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Timing {
    #[default]
    Off,
    Wall,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub scene: SceneConfig,
    pub optim: OptimConfig,
    /// Drives initialization and shuffling.
    pub seed: u64,
    pub train_count: usize,
    pub val_count: usize,
    pub nsd_tau: f64,
    pub precision: Precision,
    pub timing: Timing,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            scene: SceneConfig::default(),
            optim: OptimConfig::default(),
            seed: 0,
            train_count: 200,
            val_count: 50,
            nsd_tau: 1.0,
            precision: Precision::F64,
            timing: Timing::Off,
        }
    }
}

/// Every accepted key, in canonical order.
pub const KEYS: &[&str] = &[
    "seed",
    "epochs",
    "batch_size",
    "lr",
    "weight_decay",
    "beta1",
    "beta2",
    "eps",
    "train_count",
    "val_count",
    "nsd_tau",
    "precision",
    "timing",
    "data_seed",
    "image_size",
    "classes",
    "blobs",
    "radius",
    "intensity_mean",
    "intensity_std",
    "noise",
    "stem_channels",
    "kernel_schedule",
    "use_pim",
    "use_pam",
    "use_bim",
    "state_dim",
    "share_directions",
];

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| TrainError::Config(format!("{key}: cannot parse {v:?}")))
}

fn list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',').map(|p| parse(key, p.trim())).collect()
}

fn pair<T: FromStr + Copy>(key: &str, v: &str) -> Result<(T, T)> {
    match list::<T>(key, v)?[..] {
        [a, b] => Ok((a, b)),
        _ => Err(TrainError::Config(format!("{key}: expected `min,max`, got {v:?}"))),
    }
}

fn flag(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "on" | "1" => Ok(true),
        "false" | "off" | "0" => Ok(false),
        _ => Err(TrainError::Config(format!("{key}: expected true or false, got {v:?}"))),
    }
}

pub fn parse_precision(v: &str) -> Result<Precision> {
    match v {
        "f64" => Ok(Precision::F64),
        "f32" => Ok(Precision::F32),
        _ => Err(TrainError::Config(format!("precision must be f32 or f64, got {v:?}"))),
    }
}

/// `8,4,4` (square kernels) or `8x8,4x4,4x4`, matched to `rank` axes.
pub fn parse_schedule(v: &str, rank: usize) -> Result<Vec<KernelSpec>> {
    v.split(',')
        .map(|k| {
            let dims: Vec<usize> = k.trim().split('x').map(|d| parse("kernel_schedule", d)).collect::<Result<_>>()?;
            let spec = if dims.len() == 1 { KernelSpec::cube(dims[0], rank) } else { KernelSpec::new(&dims) };
            spec.map_err(|e| TrainError::Config(format!("kernel_schedule: {e}")))
        })
        .collect()
}

impl RunConfig {
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let v = v.trim();
        match key {
            "seed" => self.seed = parse(key, v)?,
            "epochs" => self.optim.epochs = parse(key, v)?,
            "batch_size" => self.optim.batch_size = parse(key, v)?,
            "lr" => self.optim.lr = parse(key, v)?,
            "weight_decay" => self.optim.weight_decay = parse(key, v)?,
            "beta1" => self.optim.beta1 = parse(key, v)?,
            "beta2" => self.optim.beta2 = parse(key, v)?,
            "eps" => self.optim.eps = parse(key, v)?,
            "train_count" => self.train_count = parse(key, v)?,
            "val_count" => self.val_count = parse(key, v)?,
            "nsd_tau" => self.nsd_tau = parse(key, v)?,
            "precision" => self.precision = parse_precision(v)?,
            "timing" => {
                self.timing = match v {
                    "off" => Timing::Off,
                    "wall" => Timing::Wall,
                    _ => return Err(TrainError::Config(format!("timing must be off or wall, got {v:?}"))),
                }
            }
            "data_seed" => self.scene.seed = parse(key, v)?,
            "image_size" => {
                let size: Vec<usize> = list(key, v)?;
                let size = if size.len() == 1 { vec![size[0]; 2] } else { size };
                self.scene.size = size.clone();
                self.model.extents = size;
            }
            "classes" => {
                self.scene.classes = parse(key, v)?;
                self.model.classes = self.scene.classes;
            }
            "blobs" => self.scene.blobs = pair(key, v)?,
            "radius" => self.scene.radius = pair(key, v)?,
            "intensity_mean" => self.scene.intensity_mean = list(key, v)?,
            "intensity_std" => self.scene.intensity_std = list(key, v)?,
            "noise" => self.scene.noise = parse(key, v)?,
            "stem_channels" => self.model.stem_channels = parse(key, v)?,
            "kernel_schedule" => self.model.kernel_schedule = parse_schedule(v, self.model.extents.len())?,
            "use_pim" => self.model.use_pim = flag(key, v)?,
            "use_pam" => self.model.use_pam = flag(key, v)?,
            "use_bim" => self.model.use_bim = flag(key, v)?,
            "state_dim" => self.model.state_dim = parse(key, v)?,
            "share_directions" => self.model.share_directions = flag(key, v)?,
            _ => return Err(TrainError::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Apply the lines of a config file on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| TrainError::Config(format!("line {}: expected `key = value`", n + 1)))?;
            self.set(key.trim(), value).map_err(|e| match e {
                TrainError::Config(m) => TrainError::Config(format!("line {}: {m}", n + 1)),
                e => e,
            })?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.scene.validate()?;
        self.optim.validate()?;
        if self.model.in_channels != 1 || self.model.extents != self.scene.size || self.model.classes != self.scene.classes {
            return Err(TrainError::Config("model input must match the single-channel scenes".into()));
        }
        if self.train_count == 0 || self.val_count == 0 {
            return Err(TrainError::Config("train_count and val_count must be positive".into()));
        }
        if !(self.nsd_tau >= 0.0) {
            return Err(TrainError::Config(format!("nsd_tau must be non-negative, got {}", self.nsd_tau)));
        }
        Ok(())
    }

    /// Full canonical text: parsing it back yields `self`.
    pub fn canonical(&self) -> String {
        let join = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
        let m = &self.model;
        let s = &self.scene;
        let o = &self.optim;
        let mut out = String::new();
        let mut put = |k: &str, v: String| writeln!(out, "{k} = {v}").unwrap();
        put("seed", self.seed.to_string());
        put("epochs", o.epochs.to_string());
        put("batch_size", o.batch_size.to_string());
        put("lr", o.lr.to_string());
        put("weight_decay", o.weight_decay.to_string());
        put("beta1", o.beta1.to_string());
        put("beta2", o.beta2.to_string());
        put("eps", o.eps.to_string());
        put("train_count", self.train_count.to_string());
        put("val_count", self.val_count.to_string());
        put("nsd_tau", self.nsd_tau.to_string());
        put("precision", if self.precision == Precision::F32 { "f32" } else { "f64" }.into());
        put("timing", if self.timing == Timing::Wall { "wall" } else { "off" }.into());
        put("data_seed", s.seed.to_string());
        put("image_size", s.size.iter().map(usize::to_string).collect::<Vec<_>>().join(","));
        put("classes", s.classes.to_string());
        put("blobs", format!("{},{}", s.blobs.0, s.blobs.1));
        put("radius", format!("{},{}", s.radius.0, s.radius.1));
        put("intensity_mean", join(&s.intensity_mean));
        put("intensity_std", join(&s.intensity_std));
        put("noise", s.noise.to_string());
        put("stem_channels", m.stem_channels.to_string());
        put("kernel_schedule", m.kernel_schedule.iter().map(KernelSpec::to_string).collect::<Vec<_>>().join(","));
        put("use_pim", m.use_pim.to_string());
        put("use_pam", m.use_pam.to_string());
        put("use_bim", m.use_bim.to_string());
        put("state_dim", m.state_dim.to_string());
        put("share_directions", m.share_directions.to_string());
        out
    }

    /// Short hash of everything that shapes a run except the seed and the
    /// epoch budget, so resumed and extended runs share it.
    pub fn hash(&self) -> String {
        let text: String = self
            .canonical()
            .lines()
            .filter(|l| !l.starts_with("seed ") && !l.starts_with("epochs ") && !l.starts_with("timing "))
            .map(|l| format!("{l}\n"))
            .collect();
        hex::encode(Sha256::digest(text.as_bytes()))[..16].to_string()
    }
}

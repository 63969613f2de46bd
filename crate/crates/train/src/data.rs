//! Synthetic segmentation scenes: non-overlapping elliptical "organs" of
//! K−1 foreground classes on a background, each class with its own
//! intensity distribution, plus pixel noise.

use lkm_tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::{Result, TrainError};

const MAX_ATTEMPTS: usize = 1000;

#[derive(Clone, Debug, PartialEq)]
pub struct SceneConfig {
    /// `[H, W]`
    pub size: Vec<usize>,
    /// Background plus `classes − 1` foreground classes.
    pub classes: usize,
    /// Inclusive blob count range per foreground class.
    pub blobs: (usize, usize),
    /// Semi-axis range in pixels.
    pub radius: (f64, f64),
    /// Per-class mean intensity, background first.
    pub intensity_mean: Vec<f64>,
    /// Per-class standard deviation of a blob's intensity.
    pub intensity_std: Vec<f64>,
    /// Standard deviation of independent pixel noise.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            size: vec![64, 64],
            classes: 4,
            blobs: (1, 2),
            radius: (4.0, 10.0),
            intensity_mean: vec![0.0, 1.0, -1.0, 2.0],
            intensity_std: vec![0.0, 0.1, 0.1, 0.1],
            noise: 0.3,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Scene {
    /// `[1, H, W]`, zero mean and unit variance.
    pub image: Tensor,
    /// Row-major labels in `[0, classes)`.
    pub mask: Vec<u8>,
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(TrainError::Config(m));
        if self.size.len() != 2 || self.size.contains(&0) {
            return fail(format!("scene size must be two positive extents, got {:?}", self.size));
        }
        if !(2..=256).contains(&self.classes) {
            return fail(format!("scene classes must be in 2..=256, got {}", self.classes));
        }
        if self.intensity_mean.len() != self.classes || self.intensity_std.len() != self.classes {
            return fail("one intensity mean and std per class are required".into());
        }
        if self.blobs.0 == 0 || self.blobs.0 > self.blobs.1 {
            return fail(format!("blob count range {:?} must satisfy 1 <= min <= max", self.blobs));
        }
        if !(self.radius.0 >= 1.0 && self.radius.0 <= self.radius.1) {
            return fail(format!("radius range {:?} must satisfy 1 <= min <= max", self.radius));
        }
        if self.noise < 0.0 || self.intensity_std.iter().any(|&s| s < 0.0) {
            return fail("noise and intensity spreads must be non-negative".into());
        }
        Ok(())
    }
}

struct Ellipse {
    cy: f64,
    cx: f64,
    ra: f64,
    rb: f64,
    cos: f64,
    sin: f64,
}

impl Ellipse {
    /// Inside test, optionally grown by `margin` pixels.
    fn contains(&self, y: f64, x: f64, margin: f64) -> bool {
        let (dy, dx) = (y - self.cy, x - self.cx);
        let u = (dx * self.cos + dy * self.sin) / (self.ra + margin);
        let v = (-dx * self.sin + dy * self.cos) / (self.rb + margin);
        u * u + v * v <= 1.0
    }
}

fn scene(cfg: &SceneConfig, index: u64) -> Result<Scene> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index);
    let (h, w) = (cfg.size[0], cfg.size[1]);
    let mut mask = vec![0u8; h * w];
    let mut level = vec![cfg.intensity_mean[0]; h * w];
    let bg = Normal::new(cfg.intensity_mean[0], cfg.intensity_std[0]).unwrap().sample(&mut rng);
    level.iter_mut().for_each(|v| *v = bg);
    for class in 1..cfg.classes {
        let count = rng.random_range(cfg.blobs.0..=cfg.blobs.1);
        let spread = Normal::new(cfg.intensity_mean[class], cfg.intensity_std[class]).unwrap();
        for _ in 0..count {
            let mut placed = false;
            for _ in 0..MAX_ATTEMPTS {
                let (ra, rb) = (
                    rng.random_range(cfg.radius.0..=cfg.radius.1),
                    rng.random_range(cfg.radius.0..=cfg.radius.1),
                );
                let r = ra.max(rb);
                if 2.0 * r + 1.0 > h.min(w) as f64 {
                    continue;
                }
                let theta: f64 = rng.random_range(0.0..std::f64::consts::PI);
                let e = Ellipse {
                    cy: rng.random_range(r..=h as f64 - 1.0 - r),
                    cx: rng.random_range(r..=w as f64 - 1.0 - r),
                    ra,
                    rb,
                    cos: theta.cos(),
                    sin: theta.sin(),
                };
                // Keep a one-pixel gap to earlier blobs so organs never touch.
                let clash = (0..h * w).any(|i| mask[i] != 0 && e.contains((i / w) as f64, (i % w) as f64, 1.5));
                let pixels: Vec<usize> =
                    (0..h * w).filter(|&i| e.contains((i / w) as f64, (i % w) as f64, 0.0)).collect();
                if clash || pixels.is_empty() {
                    continue;
                }
                let value = spread.sample(&mut rng);
                for i in pixels {
                    mask[i] = class as u8;
                    level[i] = value;
                }
                placed = true;
                break;
            }
            if !placed {
                return Err(TrainError::Gen(format!(
                    "scene {index}: no room for a class-{class} blob after {MAX_ATTEMPTS} attempts"
                )));
            }
        }
    }
    if cfg.noise > 0.0 {
        let noise = Normal::new(0.0, cfg.noise).unwrap();
        level.iter_mut().for_each(|v| *v += noise.sample(&mut rng));
    }
    let n = level.len() as f64;
    let mean = level.iter().sum::<f64>() / n;
    let var = level.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let scale = if var > 0.0 { 1.0 / var.sqrt() } else { 1.0 };
    let image = level.iter().map(|v| (v - mean) * scale).collect();
    Ok(Scene { image: Tensor::from_vec(image, &[1, h, w])?, mask })
}

/// `count` scenes, scene `i` drawn from its own ChaCha stream of `cfg.seed`,
/// so the result does not depend on thread count.
pub fn generate_dataset(cfg: &SceneConfig, count: usize) -> Result<Vec<Scene>> {
    generate_range(cfg, 0, count)
}

/// Scenes `first .. first + count`; disjoint ranges give disjoint splits.
pub fn generate_range(cfg: &SceneConfig, first: u64, count: usize) -> Result<Vec<Scene>> {
    cfg.validate()?;
    if count == 0 {
        return Err(TrainError::Config("dataset needs at least one scene".into()));
    }
    (first..first + count as u64).into_par_iter().map(|i| scene(cfg, i)).collect()
}

//! Stem → LM-block encoder → residual decoder with skips → 1×1 head.

use lkm_tensor::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ModelConfig;
use crate::lm::{LmBlock, LmBlockConfig};
use crate::params::{uniform, ParamStore};
use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct Model {
    pub cfg: ModelConfig,
    pub params: ParamStore,
}

fn kernel_shape(out: usize, inp: usize, k: usize, rank: usize) -> Vec<usize> {
    let mut s = vec![out, inp];
    s.extend(vec![k; rank]);
    s
}

/// `[c, 1, .., 1]`, broadcasting over the spatial axes.
fn channel_shape(c: usize, rank: usize) -> Vec<usize> {
    let mut s = vec![c];
    s.extend(vec![1; rank]);
    s
}

/// Deterministic initialization from `seed`.
pub fn build_model(cfg: &ModelConfig, seed: u64) -> Result<Model> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = ParamStore::new();
    let r = cfg.spatial_rank();
    let taps = |k: usize| k.pow(r as u32);
    let c0 = cfg.stem_channels;
    p.insert("stem.w", uniform(&mut rng, &kernel_shape(c0, 1, 3, r), taps(3))?);
    p.insert("stem.b", Tensor::zeros(&channel_shape(c0, r))?);
    for l in 0..cfg.stages() {
        block(cfg, l).init(&mut p, &mut rng)?;
    }
    for l in (0..cfg.stages()).rev() {
        let (c, c_up) = (cfg.stage_channels(l), cfg.stage_channels(l + 1));
        let d = format!("dec{l}");
        p.insert(format!("{d}.up.w"), uniform(&mut rng, &kernel_shape(c_up, c, 2, r), c_up)?);
        p.insert(format!("{d}.up.b"), Tensor::zeros(&channel_shape(c, r))?);
        for (i, cin) in [(1, 2 * c), (2, c)] {
            p.insert(format!("{d}.conv{i}.w"), uniform(&mut rng, &kernel_shape(c, cin, 3, r), cin * taps(3))?);
            p.insert(format!("{d}.conv{i}.b"), Tensor::zeros(&channel_shape(c, r))?);
            p.insert(format!("{d}.scale{i}"), Tensor::ones(&channel_shape(c, r))?);
        }
        p.insert(format!("{d}.shortcut.w"), uniform(&mut rng, &kernel_shape(c, 2 * c, 1, r), 2 * c)?);
    }
    p.insert("final.up.w", uniform(&mut rng, &kernel_shape(c0, c0, 2, r), c0)?);
    p.insert("final.up.b", Tensor::zeros(&channel_shape(c0, r))?);
    let head_in = c0 + cfg.in_channels;
    p.insert("head.w", uniform(&mut rng, &kernel_shape(cfg.classes, head_in, 1, r), head_in)?);
    p.insert("head.b", Tensor::zeros(&channel_shape(cfg.classes, r))?);
    Ok(Model { cfg: cfg.clone(), params: p })
}

fn block(cfg: &ModelConfig, l: usize) -> LmBlock {
    let mut b = LmBlockConfig::new(cfg.stage_channels(l), cfg.kernel_schedule[l].clone());
    b.use_pim = cfg.use_pim;
    b.use_pam = cfg.use_pam;
    b.use_bim = cfg.use_bim;
    b.state_dim = cfg.state_dim;
    b.share_directions = cfg.share_directions;
    LmBlock::new(format!("enc{l}"), b)
}

/// Crop the spatial axes of `x` to `extents` (leading extents kept).
fn crop(x: &Tensor, extents: &[usize]) -> Result<Tensor> {
    let mut y = x.clone();
    for (i, &e) in extents.iter().enumerate() {
        if y.shape()[i + 1] != e {
            y = y.slice(i + 1, 0, e)?;
        }
    }
    Ok(y)
}

/// Intermediate maps of one forward pass.
#[derive(Clone, Debug)]
pub struct Activations {
    /// Encoder skips `F''_l`, shallowest first.
    pub skips: Vec<Tensor>,
    pub bottleneck: Tensor,
    pub logits: Tensor,
}

impl Model {
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.forward_with(&self.params, x)
    }

    /// Forward with an explicit parameter set, e.g. one bound to a tape.
    pub fn forward_with(&self, params: &ParamStore, x: &Tensor) -> Result<Tensor> {
        Ok(self.activations(params, x)?.logits)
    }

    pub fn activations(&self, p: &ParamStore, x: &Tensor) -> Result<Activations> {
        let cfg = &self.cfg;
        let mut want = vec![cfg.in_channels];
        want.extend(&cfg.extents);
        if x.shape() != want {
            return Err(Error::Shape(format!("model expects input {want:?}, got {:?}", x.shape())));
        }
        let res = |name: &str, h: &Tensor| -> Result<Tensor> {
            Ok(h.conv(p.get(&format!("{name}.w"))?, 1, 1, 1)?.add(p.get(&format!("{name}.b"))?)?)
        };
        let mut h = x.conv(p.get("stem.w")?, 2, 1, cfg.in_channels)?.add(p.get("stem.b")?)?;
        let mut skips = Vec::with_capacity(cfg.stages());
        for l in 0..cfg.stages() {
            let (skip, next) = block(cfg, l).forward(p, &h)?;
            skips.push(skip);
            h = next;
        }
        let bottleneck = h.clone();
        for l in (0..cfg.stages()).rev() {
            let d = format!("dec{l}");
            let up = h.conv_transpose(p.get(&format!("{d}.up.w"))?, 2)?.add(p.get(&format!("{d}.up.b"))?)?;
            let up = crop(&up, &skips[l].shape()[1..])?;
            let cat = Tensor::concat(&[&up, &skips[l]], 0)?;
            let a = res(&format!("{d}.conv1"), &cat)?.mul(p.get(&format!("{d}.scale1"))?)?.silu();
            let b = res(&format!("{d}.conv2"), &a)?.mul(p.get(&format!("{d}.scale2"))?)?;
            let short = cat.conv(p.get(&format!("{d}.shortcut.w"))?, 1, 0, 1)?;
            h = b.add(&short)?.silu();
        }
        let up = h.conv_transpose(p.get("final.up.w")?, 2)?.add(p.get("final.up.b")?)?;
        let up = crop(&up, &cfg.extents)?;
        let cat = Tensor::concat(&[&up, x], 0)?;
        let logits = cat.conv(p.get("head.w")?, 1, 0, 1)?.add(p.get("head.b")?)?;
        Ok(Activations { skips, bottleneck, logits })
    }

    pub fn predict_mask(&self, x: &Tensor) -> Result<Vec<u8>> {
        Ok(argmax_classes(&self.forward(x)?))
    }
}

/// Per-pixel argmax over the leading class axis; exact ties go to the lower class.
pub fn argmax_classes(logits: &Tensor) -> Vec<u8> {
    let k = logits.shape()[0];
    let n = logits.numel() / k;
    let v = logits.data();
    (0..n)
        .map(|i| {
            let mut best = 0;
            for c in 1..k {
                if v[c * n + i] > v[best * n + i] {
                    best = c;
                }
            }
            best as u8
        })
        .collect()
}

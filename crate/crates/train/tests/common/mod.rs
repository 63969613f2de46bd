#![allow(dead_code)]

use lkm_train::RunConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Boundary by direct neighbour inspection: a pixel of `class` touching a
/// different label or the image border through one of its four faces.
pub fn oracle_boundary(mask: &[u8], h: usize, w: usize, class: u8) -> Vec<(i64, i64)> {
    let mut out = Vec::new();
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            if mask[(y as usize) * w + x as usize] != class {
                continue;
            }
            let edge = [(y - 1, x), (y + 1, x), (y, x - 1), (y, x + 1)].iter().any(|&(ny, nx)| {
                ny < 0 || nx < 0 || ny >= h as i64 || nx >= w as i64 || mask[ny as usize * w + nx as usize] != class
            });
            if edge {
                out.push((y, x));
            }
        }
    }
    out
}

/// NSD by comparing every pair of boundary points.
pub fn oracle_nsd(pred: &[u8], gt: &[u8], h: usize, w: usize, class: u8, tau: f64) -> f64 {
    let bp = oracle_boundary(pred, h, w, class);
    let bg = oracle_boundary(gt, h, w, class);
    if bp.is_empty() && bg.is_empty() {
        return 1.0;
    }
    let near = |from: &[(i64, i64)], to: &[(i64, i64)]| {
        from.iter()
            .filter(|a| to.iter().any(|b| (((a.0 - b.0).pow(2) + (a.1 - b.1).pow(2)) as f64).sqrt() <= tau))
            .count()
    };
    (near(&bp, &bg) + near(&bg, &bp)) as f64 / (bp.len() + bg.len()) as f64
}

/// Dice by set enumeration.
pub fn oracle_dice(pred: &[u8], gt: &[u8], class: u8) -> f64 {
    let p: Vec<usize> = (0..pred.len()).filter(|&i| pred[i] == class).collect();
    let g: Vec<usize> = (0..gt.len()).filter(|&i| gt[i] == class).collect();
    if p.is_empty() && g.is_empty() {
        return 1.0;
    }
    let both = p.iter().filter(|i| g.contains(i)).count();
    2.0 * both as f64 / (p.len() + g.len()) as f64
}

/// Masks with a few random rectangles so boundaries are non-trivial.
pub fn random_mask(rng: &mut ChaCha8Rng, h: usize, w: usize, classes: u8) -> Vec<u8> {
    let mut m = vec![0u8; h * w];
    for _ in 0..rng.random_range(1..5) {
        let c = rng.random_range(1..classes);
        let (y0, x0) = (rng.random_range(0..h), rng.random_range(0..w));
        let (y1, x1) = (rng.random_range(y0..h), rng.random_range(x0..w));
        for y in y0..=y1 {
            for x in x0..=x1 {
                m[y * w + x] = c;
            }
        }
    }
    // Salt so some masks have ragged edges.
    for _ in 0..rng.random_range(0..10) {
        m[rng.random_range(0..h * w)] = rng.random_range(0..classes);
    }
    m
}

/// Small, fast run configuration for integration tests.
pub fn tiny_config() -> RunConfig {
    let mut cfg = RunConfig::default();
    for (k, v) in [
        ("image_size", "32"),
        ("stem_channels", "8"),
        ("kernel_schedule", "8,4,4"),
        ("radius", "3,6"),
        ("train_count", "8"),
        ("val_count", "4"),
        ("batch_size", "4"),
        ("epochs", "2"),
    ] {
        cfg.set(k, v).unwrap();
    }
    cfg
}

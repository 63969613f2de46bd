//! Cross-entropy plus soft Dice over the foreground classes.
//!
//! ```text
//! CE   = −(1/P) Σ_i log p[y_i, i]
//! Dice = 1 − (1/(K−1)) Σ_{c≥1} (2 Σ_i p[c,i] g[c,i] + s) / (Σ_i p[c,i] + |G_c| + s),   s = 1
//! ```

use lkm_tensor::Tensor;

use crate::{Result, TrainError};

pub const DICE_SMOOTH: f64 = 1.0;

struct Terms {
    ce: f64,
    dice: f64,
    probs: Vec<f64>,
    inter: Vec<f64>,
    denom: Vec<f64>,
}

fn terms(logits: &Tensor, gt: &[u8]) -> Result<Terms> {
    let k = logits.shape()[0];
    let px = logits.numel() / k;
    if logits.rank() < 2 || gt.len() != px || k < 2 {
        return Err(TrainError::Shape(format!(
            "logits {:?} against a mask of {} labels",
            logits.shape(),
            gt.len()
        )));
    }
    if let Some(&bad) = gt.iter().find(|&&g| g as usize >= k) {
        return Err(TrainError::Shape(format!("label {bad} with {k} classes")));
    }
    let z = logits.data();
    let mut probs = vec![0.0; k * px];
    let mut ce = 0.0;
    for i in 0..px {
        let max = (0..k).map(|c| z[c * px + i]).fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = (0..k).map(|c| (z[c * px + i] - max).exp()).sum();
        for c in 0..k {
            probs[c * px + i] = (z[c * px + i] - max).exp() / sum;
        }
        ce -= z[gt[i] as usize * px + i] - max - sum.ln();
    }
    ce /= px as f64;
    let mut inter = vec![0.0; k];
    let mut denom = vec![DICE_SMOOTH; k];
    for c in 1..k {
        for i in 0..px {
            let p = probs[c * px + i];
            denom[c] += p;
            if gt[i] as usize == c {
                inter[c] += p;
                denom[c] += 1.0;
            }
        }
    }
    let dice = 1.0 - (1..k).map(|c| (2.0 * inter[c] + DICE_SMOOTH) / denom[c]).sum::<f64>() / (k - 1) as f64;
    Ok(Terms { ce, dice, probs, inter, denom })
}

/// `(cross-entropy, soft Dice loss)` without recording a gradient.
pub fn seg_loss_terms(logits: &Tensor, gt: &[u8]) -> Result<(f64, f64)> {
    let t = terms(logits, gt)?;
    Ok((t.ce, t.dice))
}

/// Scalar loss `CE + Dice` for logits `[K, spatial..]`, differentiable in the logits.
pub fn seg_loss(logits: &Tensor, gt: &[u8]) -> Result<Tensor> {
    let t = terms(logits, gt)?;
    let (k, px) = (logits.shape()[0], gt.len());
    let gt = gt.to_vec();
    let value = t.ce + t.dice;
    Ok(Tensor::custom_op(vec![1], vec![value], &[logits], move |g, _| {
        let (p, f) = (&t.probs, (k - 1) as f64);
        let mut grad = vec![0.0; k * px];
        let mut q = vec![0.0; k];
        for i in 0..px {
            // ∂Dice/∂p[c,i]
            q[0] = 0.0;
            for c in 1..k {
                let hit = if gt[i] as usize == c { 1.0 } else { 0.0 };
                let num = 2.0 * t.inter[c] + DICE_SMOOTH;
                q[c] = -(2.0 * hit / t.denom[c] - num / (t.denom[c] * t.denom[c])) / f;
            }
            let dot: f64 = (0..k).map(|c| p[c * px + i] * q[c]).sum();
            for c in 0..k {
                let pc = p[c * px + i];
                let ce = (pc - if gt[i] as usize == c { 1.0 } else { 0.0 }) / px as f64;
                grad[c * px + i] = g[0] * (ce + pc * (q[c] - dot));
            }
        }
        vec![Some(grad)]
    })?)
}

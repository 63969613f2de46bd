//! Dice and normalized surface distance on label masks.

use crate::{Result, TrainError};

fn check(pred: &[u8], gt: &[u8], shape: &[usize]) -> Result<()> {
    let n: usize = shape.iter().product();
    if pred.len() != n || gt.len() != n {
        return Err(TrainError::Shape(format!(
            "masks of {} and {} labels for shape {shape:?}",
            pred.len(),
            gt.len()
        )));
    }
    Ok(())
}

/// `2|P∩G| / (|P| + |G|)`, 1 when both sets are empty.
pub fn dice_score(pred: &[u8], gt: &[u8], class: u8) -> Result<f64> {
    check(pred, gt, &[gt.len()])?;
    let (mut p, mut g, mut both) = (0usize, 0usize, 0usize);
    for (&a, &b) in pred.iter().zip(gt) {
        p += (a == class) as usize;
        g += (b == class) as usize;
        both += (a == class && b == class) as usize;
    }
    if p + g == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * both as f64 / (p + g) as f64)
}

fn unravel(mut i: usize, shape: &[usize]) -> Vec<usize> {
    let mut c = vec![0; shape.len()];
    for (o, &e) in c.iter_mut().zip(shape).rev() {
        *o = i % e;
        i /= e;
    }
    c
}

/// Pixels of `class` with at least one 4-neighbour (6 in 3D) outside the
/// class; the outside of the image counts as another label.
pub fn boundary(mask: &[u8], shape: &[usize], class: u8) -> Vec<usize> {
    let strides: Vec<usize> = (0..shape.len()).map(|a| shape[a + 1..].iter().product()).collect();
    (0..mask.len())
        .filter(|&i| mask[i] == class)
        .filter(|&i| {
            let c = unravel(i, shape);
            (0..shape.len()).any(|a| {
                c[a] == 0 || c[a] + 1 == shape[a] || mask[i - strides[a]] != class || mask[i + strides[a]] != class
            })
        })
        .collect()
}

/// Count of `from` points within Euclidean distance `tau` of some `to` point.
fn within(from: &[usize], to: &[usize], shape: &[usize], tau: f64) -> usize {
    let mut hit = vec![false; shape.iter().product()];
    for &t in to {
        hit[t] = true;
    }
    // Offsets beyond the largest extent can never land inside the grid.
    let r = tau.floor().min(*shape.iter().max().unwrap_or(&0) as f64) as i64;
    let rank = shape.len();
    let side = (2 * r + 1) as usize;
    let offsets: Vec<Vec<i64>> = (0..side.pow(rank as u32))
        .map(|k| unravel(k, &vec![side; rank]).iter().map(|&v| v as i64 - r).collect::<Vec<i64>>())
        .filter(|o| (o.iter().map(|v| v * v).sum::<i64>() as f64) <= tau * tau)
        .collect();
    from.iter()
        .filter(|&&p| {
            let c = unravel(p, shape);
            offsets.iter().any(|o| {
                let mut flat = 0usize;
                for a in 0..rank {
                    let v = c[a] as i64 + o[a];
                    if v < 0 || v >= shape[a] as i64 {
                        return false;
                    }
                    flat = flat * shape[a] + v as usize;
                }
                hit[flat]
            })
        })
        .count()
}

/// Symmetric fraction of boundary points within `tau` of the other
/// boundary; 1 when both boundaries are empty.
pub fn nsd_score(pred: &[u8], gt: &[u8], shape: &[usize], class: u8, tau: f64) -> Result<f64> {
    check(pred, gt, shape)?;
    if tau < 0.0 || tau.is_nan() {
        return Err(TrainError::Config(format!("tolerance must be non-negative, got {tau}")));
    }
    let (bp, bg) = (boundary(pred, shape, class), boundary(gt, shape, class));
    if bp.is_empty() && bg.is_empty() {
        return Ok(1.0);
    }
    let close = within(&bp, &bg, shape, tau) + within(&bg, &bp, shape, tau);
    Ok(close as f64 / (bp.len() + bg.len()) as f64)
}

/// Mean over foreground classes `1..classes` of per-class DSC and NSD.
pub fn foreground_scores(pred: &[u8], gt: &[u8], shape: &[usize], classes: usize, tau: f64) -> Result<(f64, f64)> {
    let (mut d, mut s) = (0.0, 0.0);
    for c in 1..classes as u8 {
        d += dice_score(pred, gt, c)?;
        s += nsd_score(pred, gt, shape, c, tau)?;
    }
    let f = (classes - 1) as f64;
    Ok((d / f, s / f))
}

//! Shape arithmetic shared by the operators.

use crate::{Result, TensorError};

pub fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// Row-major strides.
pub fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// Trailing-dimension broadcast of two shapes.
pub fn broadcast_shapes(a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i < rank - a.len() { 1 } else { a[i - (rank - a.len())] };
        let db = if i < rank - b.len() { 1 } else { b[i - (rank - b.len())] };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => {
                return Err(TensorError::Broadcast {
                    lhs: a.to_vec(),
                    rhs: b.to_vec(),
                })
            }
        };
    }
    Ok(out)
}

/// How the elements of a tensor of shape `src` map onto a broadcast shape `dst`.
pub(crate) enum BroadcastMap {
    Identity,
    Scalar,
    /// `src` equals the trailing block of `dst`: offset = i % n.
    Suffix(usize),
    /// `src` repeats each element over a contiguous trailing block: offset = i / block % n.
    Repeat { block: usize, n: usize },
    Offsets(Vec<usize>),
}

impl BroadcastMap {
    pub fn new(src: &[usize], dst: &[usize]) -> Self {
        let n_src = numel(src);
        let n_dst = numel(dst);
        if n_src == n_dst {
            return BroadcastMap::Identity;
        }
        if n_src == 1 {
            return BroadcastMap::Scalar;
        }
        let pad = dst.len() - src.len();
        let aligned: Vec<usize> = std::iter::repeat(1).take(pad).chain(src.iter().copied()).collect();
        // First and last axis where src is not broadcast.
        let kept: Vec<usize> = (0..dst.len()).filter(|&i| aligned[i] == dst[i] && dst[i] != 1).collect();
        if let (Some(&first), Some(&last)) = (kept.first(), kept.last()) {
            let contiguous = (first..=last).all(|i| aligned[i] == dst[i]);
            if contiguous {
                let block: usize = dst[last + 1..].iter().product();
                if block == 1 {
                    return BroadcastMap::Suffix(n_src);
                }
                return BroadcastMap::Repeat { block, n: n_src };
            }
        }
        let src_strides = strides(&aligned);
        let eff: Vec<usize> = (0..dst.len())
            .map(|i| if aligned[i] == 1 { 0 } else { src_strides[i] })
            .collect();
        BroadcastMap::Offsets(strided_offsets(dst, &eff))
    }

    #[inline]
    pub fn offset(&self, i: usize) -> usize {
        match self {
            BroadcastMap::Identity => i,
            BroadcastMap::Scalar => 0,
            BroadcastMap::Suffix(n) => i % n,
            BroadcastMap::Repeat { block, n } => (i / block) % n,
            BroadcastMap::Offsets(o) => o[i],
        }
    }
}

/// Source offsets for each row-major position of `shape`, given per-axis source strides.
pub(crate) fn strided_offsets(shape: &[usize], strides: &[usize]) -> Vec<usize> {
    let n = numel(shape);
    let mut out = Vec::with_capacity(n);
    if n == 0 {
        return out;
    }
    let rank = shape.len();
    let mut idx = vec![0usize; rank];
    let mut off = 0usize;
    for _ in 0..n {
        out.push(off);
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            off += strides[ax];
            if idx[ax] < shape[ax] {
                break;
            }
            off -= strides[ax] * shape[ax];
            idx[ax] = 0;
        }
    }
    out
}

/// Sum `grad` (shaped like `dst`) back down onto `src`.
pub(crate) fn reduce_broadcast(grad: &[f64], src: &[usize], dst: &[usize]) -> Vec<f64> {
    let map = BroadcastMap::new(src, dst);
    if let BroadcastMap::Identity = map {
        return grad.to_vec();
    }
    let mut out = vec![0.0; numel(src)];
    for (i, g) in grad.iter().enumerate() {
        out[map.offset(i)] += g;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn broadcast_rules() {
        assert_eq!(broadcast_shapes(&[2, 3], &[3]).unwrap(), vec![2, 3]);
        assert_eq!(broadcast_shapes(&[4, 1, 3], &[2, 1]).unwrap(), vec![4, 2, 3]);
        assert!(broadcast_shapes(&[2, 3], &[2]).is_err());
    }

    #[test]
    fn maps_agree_with_general_offsets() {
        let cases: &[(&[usize], &[usize])] = &[
            (&[3], &[2, 3]),
            (&[2, 1], &[2, 3]),
            (&[3, 1, 1], &[3, 2, 2]),
            (&[1, 3, 1], &[2, 3, 2]),
            (&[2, 1, 2], &[2, 3, 2]),
        ];
        for (src, dst) in cases {
            let map = BroadcastMap::new(src, dst);
            let pad = dst.len() - src.len();
            let aligned: Vec<usize> = std::iter::repeat(1).take(pad).chain(src.iter().copied()).collect();
            let st = strides(&aligned);
            let eff: Vec<usize> = (0..dst.len()).map(|i| if aligned[i] == 1 { 0 } else { st[i] }).collect();
            let general = strided_offsets(dst, &eff);
            for (i, &g) in general.iter().enumerate() {
                assert_eq!(map.offset(i), g, "{src:?} -> {dst:?} at {i}");
            }
        }
    }
}

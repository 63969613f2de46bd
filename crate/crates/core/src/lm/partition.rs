//! Non-overlapping sub-kernel tiling of a `[C, spatial..]` feature map.
//!
//! Inside a sub-kernel pixels are visited row-major (depth first in 3D);
//! sub-kernels themselves are ordered row-major over the kernel grid.
//! Extents that are not multiples of the kernel are zero-padded on the
//! far side and cropped on the way back.

use std::sync::Arc;

use lkm_tensor::Tensor;

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct KernelSpec {
    pub dims: Vec<usize>,
}

impl KernelSpec {
    pub fn new(dims: &[usize]) -> Result<Self> {
        if !(2..=3).contains(&dims.len()) || dims.contains(&0) {
            return Err(Error::Config(format!("kernel dims must be 2 or 3 positive extents, got {dims:?}")));
        }
        Ok(Self { dims: dims.to_vec() })
    }

    /// `k × k` (or `k × k × k`).
    pub fn cube(k: usize, rank: usize) -> Result<Self> {
        Self::new(&vec![k; rank])
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn volume(&self) -> usize {
        self.dims.iter().product()
    }
}

impl std::fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.dims.iter().map(usize::to_string).collect();
        write!(f, "{}", parts.join("x"))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PartitionLayout {
    pub channels: usize,
    pub source: Vec<usize>,
    pub padded: Vec<usize>,
    pub kernel: Vec<usize>,
    pub grid: Vec<usize>,
    /// `order[g * L + j]` = flat padded-map offset of pixel `j` of sub-kernel `g`.
    order: Arc<Vec<usize>>,
    /// Inverse of `order` restricted to source pixels, in source row-major order.
    inverse: Arc<Vec<usize>>,
}

fn row_major(extents: &[usize], coords: &[usize]) -> usize {
    coords.iter().zip(extents).fold(0, |acc, (&c, &e)| acc * e + c)
}

fn unravel(mut i: usize, extents: &[usize]) -> Vec<usize> {
    let mut out = vec![0; extents.len()];
    for (o, &e) in out.iter_mut().zip(extents).rev() {
        *o = i % e;
        i /= e;
    }
    out
}

impl PartitionLayout {
    pub fn new(channels: usize, source: &[usize], kernel: &KernelSpec, allow_pad: bool) -> Result<Self> {
        if source.len() != kernel.rank() {
            return Err(Error::Partition(format!(
                "kernel {kernel} does not match spatial extents {source:?}"
            )));
        }
        let padded: Vec<usize> = source.iter().zip(&kernel.dims).map(|(&s, &k)| s.div_ceil(k) * k).collect();
        if !allow_pad && padded != source {
            return Err(Error::Partition(format!("extents {source:?} are not multiples of kernel {kernel}")));
        }
        let grid: Vec<usize> = padded.iter().zip(&kernel.dims).map(|(&p, &k)| p / k).collect();
        let (count, len): (usize, usize) = (grid.iter().product(), kernel.volume());
        let mut order = Vec::with_capacity(count * len);
        for g in 0..count {
            let gc = unravel(g, &grid);
            for j in 0..len {
                let jc = unravel(j, &kernel.dims);
                let pc: Vec<usize> = gc.iter().zip(&jc).zip(&kernel.dims).map(|((g, j), k)| g * k + j).collect();
                order.push(row_major(&padded, &pc));
            }
        }
        let mut slot_of_padded = vec![0; order.len()];
        for (slot, &p) in order.iter().enumerate() {
            slot_of_padded[p] = slot;
        }
        let n_src: usize = source.iter().product();
        let inverse = (0..n_src)
            .map(|i| slot_of_padded[row_major(&padded, &unravel(i, source))])
            .collect();
        Ok(Self {
            channels,
            source: source.to_vec(),
            padded,
            kernel: kernel.dims.clone(),
            grid,
            order: Arc::new(order),
            inverse: Arc::new(inverse),
        })
    }

    /// Number of sub-kernels.
    pub fn count(&self) -> usize {
        self.grid.iter().product()
    }

    /// Pixels per sub-kernel.
    pub fn seq_len(&self) -> usize {
        self.kernel.iter().product()
    }

    pub fn is_padded(&self) -> bool {
        self.padded != self.source
    }

    /// `(sub-kernel, position)` of a source pixel given by flat row-major index.
    pub fn locate(&self, pixel: usize) -> (usize, usize) {
        let slot = self.inverse[pixel];
        (slot / self.seq_len(), slot % self.seq_len())
    }

    fn source_shape(&self) -> Vec<usize> {
        let mut s = vec![self.channels];
        s.extend(&self.source);
        s
    }

    fn check_map(&self, f: &Tensor) -> Result<()> {
        if f.shape() != self.source_shape() {
            return Err(Error::Partition(format!(
                "feature map {:?} does not match layout {:?}",
                f.shape(),
                self.source_shape()
            )));
        }
        Ok(())
    }

    fn padded_map(&self, f: &Tensor) -> Result<Tensor> {
        self.check_map(f)?;
        if !self.is_padded() {
            return Ok(f.clone());
        }
        let mut pads = vec![(0, 0)];
        pads.extend(self.source.iter().zip(&self.padded).map(|(&s, &p)| (0, p - s)));
        Ok(f.pad(&pads)?)
    }

    fn gather_in(&self, f: &Tensor, tokens: bool) -> Result<Tensor> {
        let padded = self.padded_map(f)?;
        let (c, p) = (self.channels, self.order.len());
        let index: Vec<usize> = if tokens {
            self.order.iter().flat_map(|&o| (0..c).map(move |ch| ch * p + o)).collect()
        } else {
            (0..c).flat_map(|ch| self.order.iter().map(move |&o| ch * p + o)).collect()
        };
        let shape = if tokens {
            [self.count(), self.seq_len(), c]
        } else {
            [c, self.count(), self.seq_len()]
        };
        Ok(padded.gather(Arc::new(index), &shape))
    }

    fn gather_out(&self, seqs: &Tensor, tokens: bool) -> Result<Tensor> {
        let want = if tokens {
            [self.count(), self.seq_len(), self.channels]
        } else {
            [self.channels, self.count(), self.seq_len()]
        };
        if seqs.shape() != want {
            return Err(Error::Partition(format!(
                "sequences {:?} do not match layout {want:?}",
                seqs.shape()
            )));
        }
        let (c, gl) = (self.channels, self.order.len());
        let index: Vec<usize> = (0..c)
            .flat_map(|ch| {
                self.inverse.iter().map(move |&slot| if tokens { slot * c + ch } else { ch * gl + slot })
            })
            .collect();
        Ok(seqs.gather(Arc::new(index), &self.source_shape()))
    }
}

/// `[C, spatial..]` → `[C, G, L]` sequences, one per sub-kernel.
pub fn partition_pixels(f: &Tensor, kernel: &KernelSpec, allow_pad: bool) -> Result<(Tensor, PartitionLayout)> {
    let layout = PartitionLayout::new(f.shape()[0], &f.shape()[1..], kernel, allow_pad)?;
    Ok((layout.gather_in(f, false)?, layout))
}

/// Inverse of [`partition_pixels`]; padding is cropped.
pub fn unpartition(seqs: &Tensor, layout: &PartitionLayout) -> Result<Tensor> {
    layout.gather_out(seqs, false)
}

/// Token-major partition: `[G, L, C]`, ready for a batched mixer.
pub fn partition_tokens(f: &Tensor, layout: &PartitionLayout) -> Result<Tensor> {
    layout.gather_in(f, true)
}

pub fn unpartition_tokens(tokens: &Tensor, layout: &PartitionLayout) -> Result<Tensor> {
    layout.gather_out(tokens, true)
}

/// Mean over every sub-kernel tile (padding counts as zeros): `[C, grid..]`.
///
/// Evaluated as `x₀ + Σ(xⱼ − x₀)/L`, which is exact on constant tiles.
pub fn pool_kernels(f: &Tensor, layout: &PartitionLayout) -> Result<Tensor> {
    let seqs = layout.gather_in(f, false)?;
    let l = layout.seq_len();
    let means = seqs
        .data()
        .chunks(l)
        .map(|tile| tile[0] + tile.iter().map(|v| v - tile[0]).sum::<f64>() / l as f64)
        .collect();
    let mut shape = vec![layout.channels];
    shape.extend(&layout.grid);
    Ok(Tensor::custom_op(shape, means, &[&seqs], move |g, _| {
        let inv = 1.0 / l as f64;
        vec![Some(g.iter().flat_map(|&gv| std::iter::repeat_n(gv * inv, l)).collect())]
    })?)
}

/// Broadcast each representative back over its tile, cropped to the source extents.
pub fn unpool(z: &Tensor, layout: &PartitionLayout) -> Result<Tensor> {
    let mut want = vec![layout.channels];
    want.extend(&layout.grid);
    if z.shape() != want {
        return Err(Error::Partition(format!("pooled map {:?} does not match grid {want:?}", z.shape())));
    }
    let (g, l) = (layout.count(), layout.seq_len());
    let index: Vec<usize> = (0..layout.channels)
        .flat_map(|ch| layout.inverse.iter().map(move |&slot| ch * g + slot / l))
        .collect();
    Ok(z.gather(Arc::new(index), &layout.source_shape()))
}

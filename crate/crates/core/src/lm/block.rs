//! One encoder stage: `F' = PiM(F)`, `F'' = PaM(F')`, `F_next = Down(F'')`.

use lkm_tensor::Tensor;
use rand::Rng;

use super::partition::{partition_tokens, pool_kernels, unpartition_tokens, unpool, KernelSpec, PartitionLayout};
use crate::params::{uniform, ParamStore};
use crate::ssm::MambaMixer;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoolKind {
    Mean,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LmBlockConfig {
    pub channels: usize,
    pub kernel: KernelSpec,
    pub use_pim: bool,
    pub use_pam: bool,
    pub use_bim: bool,
    pub pooling: PoolKind,
    pub state_dim: usize,
    pub share_directions: bool,
}

impl LmBlockConfig {
    pub fn new(channels: usize, kernel: KernelSpec) -> Self {
        Self {
            channels,
            kernel,
            use_pim: true,
            use_pam: true,
            use_bim: true,
            pooling: PoolKind::Mean,
            state_dim: 8,
            share_directions: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LmBlock {
    pub prefix: String,
    pub cfg: LmBlockConfig,
}

impl LmBlock {
    pub fn new(prefix: impl Into<String>, cfg: LmBlockConfig) -> Self {
        Self { prefix: prefix.into(), cfg }
    }

    fn mixer(&self, which: &str) -> MambaMixer {
        MambaMixer {
            prefix: format!("{}.{which}", self.prefix),
            channels: self.cfg.channels,
            inner: self.cfg.channels,
            state_dim: self.cfg.state_dim,
            bidirectional: self.cfg.use_bim,
            share_directions: self.cfg.share_directions,
        }
    }

    pub fn init<R: Rng + ?Sized>(&self, store: &mut ParamStore, rng: &mut R) -> Result<()> {
        if self.cfg.use_pim {
            self.mixer("pim").init(store, rng)?;
        }
        if self.cfg.use_pam {
            self.mixer("pam").init(store, rng)?;
        }
        let c = self.cfg.channels;
        let rank = self.cfg.kernel.rank();
        let mut w = vec![2 * c, c];
        w.extend(vec![3; rank]);
        let mut b = vec![2 * c];
        b.extend(vec![1; rank]);
        store.insert(format!("{}.down.w", self.prefix), uniform(rng, &w, c * 3usize.pow(rank as u32))?);
        store.insert(format!("{}.down.b", self.prefix), Tensor::zeros(&b)?);
        Ok(())
    }

    pub fn layout(&self, f: &Tensor) -> Result<PartitionLayout> {
        if f.rank() != self.cfg.kernel.rank() + 1 || f.shape()[0] != self.cfg.channels {
            return Err(Error::Shape(format!(
                "block over {} channels with {}-d kernels got {:?}",
                self.cfg.channels,
                self.cfg.kernel.rank(),
                f.shape()
            )));
        }
        PartitionLayout::new(self.cfg.channels, &f.shape()[1..], &self.cfg.kernel, true)
    }

    /// Mamba over the pixels of each sub-kernel, with residual.
    pub fn pim_forward(&self, store: &ParamStore, f: &Tensor) -> Result<Tensor> {
        if !self.cfg.use_pim {
            return Ok(f.clone());
        }
        let layout = self.layout(f)?;
        let tokens = partition_tokens(f, &layout)?;
        let mixed = self.mixer("pim").forward(store, &tokens)?;
        Ok(f.add(&unpartition_tokens(&mixed, &layout)?)?)
    }

    /// Pool each sub-kernel to one token, mix the grid sequence, unpool, residual.
    pub fn pam_forward(&self, store: &ParamStore, f: &Tensor) -> Result<Tensor> {
        if !self.cfg.use_pam {
            return Ok(f.clone());
        }
        let layout = self.layout(f)?;
        let (c, g) = (self.cfg.channels, layout.count());
        let reps = pool_kernels(f, &layout)?.reshape(&[c, g])?.permute(&[1, 0])?.unsqueeze(0)?;
        let mixed = self.mixer("pam").forward(store, &reps)?;
        let mut grid = vec![c];
        grid.extend(&layout.grid);
        let back = mixed.reshape(&[g, c])?.permute(&[1, 0])?.reshape(&grid)?;
        Ok(f.add(&unpool(&back, &layout)?)?)
    }

    /// Stride-2 3×3 convolution doubling channels, then SiLU.
    pub fn downsample(&self, store: &ParamStore, f: &Tensor) -> Result<Tensor> {
        let w = store.get(&format!("{}.down.w", self.prefix))?;
        let b = store.get(&format!("{}.down.b", self.prefix))?;
        Ok(f.conv(w, 2, 1, 1)?.add(b)?.silu())
    }

    /// Returns `(F'', F_next)`: the skip tensor and the downsampled map.
    pub fn forward(&self, store: &ParamStore, f: &Tensor) -> Result<(Tensor, Tensor)> {
        let skip = self.pam_forward(store, &self.pim_forward(store, f)?)?;
        let next = self.downsample(store, &skip)?;
        Ok((skip, next))
    }
}

//! Large-kernel Mamba blocks: pixel-level mixing inside sub-kernels and
//! patch-level mixing across them.

mod block;
mod partition;

pub use block::{LmBlock, LmBlockConfig, PoolKind};
pub use partition::{
    partition_pixels, partition_tokens, pool_kernels, unpartition, unpartition_tokens, unpool, KernelSpec,
    PartitionLayout,
};

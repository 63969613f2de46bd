//! Large-kernel Mamba U-Net: selective state-space kernels, pixel- and
//! patch-level Mamba blocks, the segmentation network and its checkpoints.

mod error;
pub mod lm;
pub mod params;
pub mod ssm;
pub mod unet;

pub use error::{Error, Result};
pub use params::ParamStore;

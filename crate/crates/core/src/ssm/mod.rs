//! Diagonal state-space kernels.

mod kernel;
mod layer;
mod mixer;
mod scan;
mod zoh;

pub use kernel::{ssm_conv_apply, ssm_conv_kernel};
pub use layer::{bim_scan, selective_project, selective_scan, SsmKind, SsmLayerParams, SsmMode};
pub use mixer::{layer_norm, MambaMixer, NORM_EPS};
pub use scan::{linear_recurrence_scan, ssm_parallel_scan, ssm_scan};
pub use zoh::{zoh_discretize, DiscreteParams, SERIES_THRESHOLD};

//! Desk-scale reproduction harness: synthetic scenes, Dice+CE loss, DSC and
//! NSD metrics, Adam, the training loop and the ablation and kernel sweeps.

pub mod config;
pub mod data;
mod error;
pub mod loss;
pub mod metrics;
pub mod optim;
pub mod sweep;
pub mod train;

pub use config::RunConfig;
pub use error::{Result, TrainError};

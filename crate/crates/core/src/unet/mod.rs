//! The U-shaped segmentation network.

mod checkpoint;
mod config;
mod model;

pub use checkpoint::{decode, encode, load_checkpoint, save_checkpoint, MAGIC};
pub use config::{halve, ModelConfig};
pub use model::{argmax_classes, build_model, Activations, Model};

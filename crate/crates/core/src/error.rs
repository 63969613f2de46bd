use lkm_tensor::TensorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("mode error: {0}")]
    Mode(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("partition error: {0}")]
    Partition(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("missing parameter {0}")]
    MissingParam(String),
    #[error("checkpoint error in {field}: {reason}")]
    Checkpoint { field: String, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

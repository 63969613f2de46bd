use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("generation failed: {0}")]
    Gen(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("non-finite gradient in parameter {0}")]
    NonFinite(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] lkm_core::Error),
    #[error(transparent)]
    Tensor(#[from] lkm_tensor::TensorError),
    #[error(transparent)]
    Erf(#[from] lkm_erf::ErfError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, TrainError>;

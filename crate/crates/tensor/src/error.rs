use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("shapes {lhs:?} and {rhs:?} cannot be broadcast together")]
    Broadcast { lhs: Vec<usize>, rhs: Vec<usize> },
    #[error("shape error: {0}")]
    Shape(String),
    #[error("{channels} channels are not divisible into {groups} groups")]
    Group { channels: usize, groups: usize },
    #[error("axis {axis} out of range for rank {rank}")]
    Axis { axis: usize, rank: usize },
    #[error("gradient error: {0}")]
    Grad(String),
}

pub type Result<T> = std::result::Result<T, TensorError>;

//! Dense tensors with tape-based reverse-mode automatic differentiation.
//!
//! Tensors are immutable row-major f64 buffers. Watching a tensor on a
//! [`Tape`] makes it a differentiable leaf; every operation that touches a
//! watched tensor is appended to the same tape, and [`Tape::backward`] walks
//! the records in reverse.
//!
//! ```
//! use lkm_tensor::{Tape, Tensor};
//!
//! let tape = Tape::new();
//! let x = tape.watch(&Tensor::from_vec(vec![1.0, 2.0], &[2]).unwrap());
//! let loss = x.mul(&x).unwrap().sum_all();
//! let grads = tape.backward(&loss).unwrap();
//! assert_eq!(grads.get(&x).unwrap().data(), &[2.0, 4.0]);
//! ```

mod error;
mod gradcheck;
pub mod ops;
pub mod shape;
mod tape;
mod tensor;

pub use error::{Result, TensorError};
pub use gradcheck::{finite_diff_check, finite_diff_check_at};
pub use ops::elementwise::{elementwise, sigmoid, softplus, ElementwiseKind};
pub use ops::reduce::ReduceKind;
pub use tape::{Gradients, Tape};
pub use tensor::{Precision, Tensor};

impl Tensor {
    /// Record a caller-defined operation. `backward` receives the output
    /// gradient and a flag per input telling whether that input needs a
    /// gradient, and returns one optional gradient buffer per input.
    pub fn custom_op<F>(shape: Vec<usize>, data: Vec<f64>, inputs: &[&Tensor], backward: F) -> Result<Tensor>
    where
        F: Fn(&[f64], &[bool]) -> Vec<Option<Vec<f64>>> + Send + Sync + 'static,
    {
        if shape::numel(&shape) != data.len() || shape.iter().any(|&d| d == 0) {
            return Err(TensorError::Shape(format!(
                "custom op output shape {shape:?} with {} elements",
                data.len()
            )));
        }
        Ok(Tensor::from_op(shape, data, inputs, backward))
    }
}

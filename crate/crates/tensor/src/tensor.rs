use std::fmt;
use std::sync::Arc;

use crate::shape::numel;
use crate::tape::Tape;
use crate::{Result, TensorError};

/// Storage precision. Arithmetic always runs in f64; `F32` rounds every
/// stored result to the nearest single-precision value.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Precision {
    #[default]
    F64,
    F32,
}

impl Precision {
    #[inline]
    pub fn round(self, v: f64) -> f64 {
        match self {
            Precision::F64 => v,
            Precision::F32 => v as f32 as f64,
        }
    }
}

#[derive(Clone)]
struct Node {
    tape: Tape,
    id: usize,
    leaf: bool,
}

/// Dense row-major tensor. Cloning is cheap: the buffer is shared and immutable.
#[derive(Clone)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Arc<Vec<f64>>,
    precision: Precision,
    node: Option<Node>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let preview: Vec<f64> = self.data.iter().take(8).copied().collect();
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("data", &preview)
            .field("requires_grad", &self.requires_grad())
            .finish()
    }
}

impl Tensor {
    pub fn from_vec(data: Vec<f64>, shape: &[usize]) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(TensorError::Shape(format!("zero extent in shape {shape:?}")));
        }
        if numel(shape) != data.len() {
            return Err(TensorError::Shape(format!(
                "shape {shape:?} needs {} elements, got {}",
                numel(shape),
                data.len()
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data: Arc::new(data),
            precision: Precision::F64,
            node: None,
        })
    }

    pub fn scalar(v: f64) -> Self {
        Self::from_vec(vec![v], &[1]).unwrap()
    }

    pub fn full(shape: &[usize], v: f64) -> Result<Self> {
        Self::from_vec(vec![v; numel(shape)], shape)
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Self::full(shape, 0.0)
    }

    pub fn ones(shape: &[usize]) -> Result<Self> {
        Self::full(shape, 1.0)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.data.as_ref().clone()
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.numel(), 1, "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    /// Copy with storage rounded to `precision`. Drops any tape link.
    pub fn with_precision(&self, precision: Precision) -> Self {
        let data = match precision {
            Precision::F64 => self.data.clone(),
            Precision::F32 => Arc::new(self.data.iter().map(|&v| precision.round(v)).collect()),
        };
        Self {
            shape: self.shape.clone(),
            data,
            precision,
            node: None,
        }
    }

    pub fn requires_grad(&self) -> bool {
        self.node.is_some()
    }

    pub(crate) fn is_leaf(&self) -> bool {
        self.node.as_ref().is_some_and(|n| n.leaf)
    }

    /// Same values, no tape link.
    pub fn detach(&self) -> Self {
        Self {
            node: None,
            ..self.clone()
        }
    }

    pub(crate) fn node(&self) -> Option<(&Tape, usize)> {
        self.node.as_ref().map(|n| (&n.tape, n.id))
    }

    pub(crate) fn with_node(&self, tape: Tape, id: usize) -> Self {
        Self {
            node: Some(Node { tape, id, leaf: true }),
            ..self.clone()
        }
    }

    /// Shares the buffer under a new shape with the same element count.
    pub(crate) fn share_reshaped(&self, shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: self.data.clone(),
            precision: self.precision,
            node: None,
        }
    }

    /// Build the result of an operation and record it on the tape of the
    /// first input that requires a gradient.
    pub(crate) fn from_op<F>(shape: Vec<usize>, mut data: Vec<f64>, inputs: &[&Tensor], backward: F) -> Tensor
    where
        F: Fn(&[f64], &[bool]) -> Vec<Option<Vec<f64>>> + Send + Sync + 'static,
    {
        debug_assert_eq!(numel(&shape), data.len());
        let precision = if inputs.iter().any(|t| t.precision == Precision::F32) {
            Precision::F32
        } else {
            Precision::F64
        };
        if precision == Precision::F32 {
            data.iter_mut().for_each(|v| *v = precision.round(*v));
        }
        let tape = inputs.iter().find_map(|t| t.node.as_ref().map(|n| n.tape.clone()));
        let node = tape.map(|tape| {
            let ids = inputs
                .iter()
                .map(|t| {
                    t.node.as_ref().map(|n| {
                        debug_assert!(n.tape.same(&tape), "inputs recorded on different tapes");
                        n.id
                    })
                })
                .collect();
            let id = tape.push_op(data.len(), ids, Box::new(backward));
            Node { tape, id, leaf: false }
        });
        Tensor {
            shape,
            data: Arc::new(data),
            precision,
            node,
        }
    }

    /// Value at a multi-index.
    pub fn at(&self, index: &[usize]) -> f64 {
        assert_eq!(index.len(), self.rank());
        let mut off = 0;
        for (i, (&ix, &d)) in index.iter().zip(&self.shape).enumerate() {
            assert!(ix < d, "index {ix} out of range on axis {i}");
            off = off * d + ix;
        }
        self.data[off]
    }

    /// Largest absolute elementwise difference; shapes must match.
    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        assert_eq!(self.shape, other.shape);
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

//! Operation recording and the reverse sweep.

use std::sync::{Arc, Mutex};

use crate::{Result, Tensor, TensorError};

/// Backward rule: given the output gradient and which inputs need a gradient,
/// return one optional gradient buffer per input.
pub(crate) type BackwardFn = Box<dyn Fn(&[f64], &[bool]) -> Vec<Option<Vec<f64>>> + Send + Sync>;

struct Record {
    len: usize,
    inputs: Vec<Option<usize>>,
    backward: Option<BackwardFn>,
}

/// An append-only list of recorded operations.
///
/// Records are pushed as operations execute, so every operation's inputs
/// precede it and a reverse walk over the list is a valid topological order.
#[derive(Clone, Default)]
pub struct Tape {
    records: Arc<Mutex<Vec<Record>>>,
}

impl std::fmt::Debug for Tape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Tape({} records)", self.len())
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.records.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub(crate) fn same(&self, other: &Tape) -> bool {
        Arc::ptr_eq(&self.records, &other.records)
    }

    /// Register `t` as a differentiable leaf on this tape.
    pub fn watch(&self, t: &Tensor) -> Tensor {
        let id = self.push(Record {
            len: t.numel(),
            inputs: Vec::new(),
            backward: None,
        });
        t.with_node(self.clone(), id)
    }

    pub(crate) fn push_op(&self, len: usize, inputs: Vec<Option<usize>>, backward: BackwardFn) -> usize {
        self.push(Record {
            len,
            inputs,
            backward: Some(backward),
        })
    }

    fn push(&self, r: Record) -> usize {
        let mut records = self.records.lock().unwrap();
        records.push(r);
        records.len() - 1
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: &Tensor) -> Result<Gradients> {
        if loss.numel() != 1 {
            return Err(TensorError::Grad(format!(
                "loss must be scalar, got shape {:?}",
                loss.shape()
            )));
        }
        let root = match loss.node() {
            Some((tape, id)) if tape.same(self) => id,
            _ => return Err(TensorError::Grad("loss is not recorded on this tape".into())),
        };
        let records = self.records.lock().unwrap();
        let mut grads: Vec<Option<Vec<f64>>> = (0..records.len()).map(|_| None).collect();
        grads[root] = Some(vec![1.0]);
        for id in (0..=root).rev() {
            let rec = &records[id];
            let Some(backward) = &rec.backward else { continue };
            let Some(g) = grads[id].take() else { continue };
            let needs: Vec<bool> = rec.inputs.iter().map(Option::is_some).collect();
            let input_grads = backward(&g, &needs);
            for (slot, ig) in rec.inputs.iter().zip(input_grads) {
                if let (Some(src), Some(ig)) = (slot, ig) {
                    debug_assert_eq!(ig.len(), records[*src].len);
                    match &mut grads[*src] {
                        Some(acc) => acc.iter_mut().zip(&ig).for_each(|(a, b)| *a += b),
                        empty => *empty = Some(ig),
                    }
                }
            }
        }
        Ok(Gradients {
            tape: self.clone(),
            grads,
        })
    }
}

/// Gradients produced by [`Tape::backward`], keyed by tape node.
pub struct Gradients {
    tape: Tape,
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient with respect to `t`, shaped like `t`.
    ///
    /// Leaves that the loss does not reach get a zero gradient. Intermediate
    /// results and tensors from other tapes have none.
    pub fn get(&self, t: &Tensor) -> Option<Tensor> {
        let (tape, id) = t.node()?;
        if !tape.same(&self.tape) {
            return None;
        }
        if !t.is_leaf() {
            return None;
        }
        let data = match &self.grads[id] {
            Some(g) => g.clone(),
            None => vec![0.0; t.numel()],
        };
        Some(Tensor::from_vec(data, t.shape()).expect("gradient length matches node"))
    }

    pub fn get_data(&self, t: &Tensor) -> Option<Vec<f64>> {
        self.get(t).map(|g| g.to_vec())
    }
}

use crate::shape::{numel, strides};
use crate::{Result, Tensor, TensorError};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReduceKind {
    Sum,
    Mean,
    Max,
}

/// Output offset for every input element when `axes` are collapsed.
fn reduced_index(shape: &[usize], axes: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let kept: Vec<usize> = shape
        .iter()
        .enumerate()
        .map(|(i, &d)| if axes.contains(&i) { 1 } else { d })
        .collect();
    let ks = strides(&kept);
    let eff: Vec<usize> = (0..shape.len())
        .map(|i| if axes.contains(&i) { 0 } else { ks[i] })
        .collect();
    (crate::shape::strided_offsets(shape, &eff), kept)
}

impl Tensor {
    /// Reduce over `axes`. Reduced axes are dropped unless `keep_dims`; a
    /// full reduction without `keep_dims` yields shape `[1]`.
    pub fn reduce(&self, kind: ReduceKind, axes: &[usize], keep_dims: bool) -> Result<Tensor> {
        let r = self.rank();
        for &a in axes {
            if a >= r {
                return Err(TensorError::Axis { axis: a, rank: r });
            }
        }
        let (index, kept) = reduced_index(self.shape(), axes);
        let n_out = numel(&kept);
        let count = (self.numel() / n_out) as f64;
        let out_shape = if keep_dims {
            kept
        } else {
            let s: Vec<usize> = (0..r).filter(|i| !axes.contains(i)).map(|i| self.shape()[i]).collect();
            if s.is_empty() {
                vec![1]
            } else {
                s
            }
        };
        let x = self.data();
        match kind {
            ReduceKind::Sum | ReduceKind::Mean => {
                let mut out = vec![0.0; n_out];
                for (&o, &v) in index.iter().zip(x) {
                    out[o] += v;
                }
                let scale = if kind == ReduceKind::Mean { 1.0 / count } else { 1.0 };
                if kind == ReduceKind::Mean {
                    out.iter_mut().for_each(|v| *v /= count);
                }
                Ok(Tensor::from_op(out_shape, out, &[self], move |g, _| {
                    vec![Some(index.iter().map(|&o| g[o] * scale).collect())]
                }))
            }
            ReduceKind::Max => {
                let mut out = vec![f64::NEG_INFINITY; n_out];
                let mut arg = vec![usize::MAX; n_out];
                for (i, (&o, &v)) in index.iter().zip(x).enumerate() {
                    // First occurrence wins ties.
                    if v > out[o] || arg[o] == usize::MAX {
                        out[o] = v;
                        arg[o] = i;
                    }
                }
                let n = self.numel();
                Ok(Tensor::from_op(out_shape, out, &[self], move |g, _| {
                    let mut gx = vec![0.0; n];
                    for (o, &i) in arg.iter().enumerate() {
                        gx[i] += g[o];
                    }
                    vec![Some(gx)]
                }))
            }
        }
    }

    pub fn sum_all(&self) -> Tensor {
        let axes: Vec<usize> = (0..self.rank()).collect();
        self.reduce(ReduceKind::Sum, &axes, false).expect("valid axes")
    }

    pub fn mean_all(&self) -> Tensor {
        let axes: Vec<usize> = (0..self.rank()).collect();
        self.reduce(ReduceKind::Mean, &axes, false).expect("valid axes")
    }

    /// Softmax along `axis`.
    pub fn softmax(&self, axis: usize) -> Result<Tensor> {
        let r = self.rank();
        if axis >= r {
            return Err(TensorError::Axis { axis, rank: r });
        }
        let ext = self.shape()[axis];
        let inner: usize = self.shape()[axis + 1..].iter().product();
        let outer: usize = self.shape()[..axis].iter().product();
        let x = self.data();
        let mut y = vec![0.0; self.numel()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |k: usize| (o * ext + k) * inner + i;
                let m = (0..ext).map(|k| x[at(k)]).fold(f64::NEG_INFINITY, f64::max);
                let mut s = 0.0;
                for k in 0..ext {
                    let e = (x[at(k)] - m).exp();
                    y[at(k)] = e;
                    s += e;
                }
                for k in 0..ext {
                    y[at(k)] /= s;
                }
            }
        }
        let yv = std::sync::Arc::new(y.clone());
        Ok(Tensor::from_op(self.shape().to_vec(), y, &[self], move |g, _| {
            let mut gx = vec![0.0; g.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let at = |k: usize| (o * ext + k) * inner + i;
                    let dot: f64 = (0..ext).map(|k| g[at(k)] * yv[at(k)]).sum();
                    for k in 0..ext {
                        gx[at(k)] = yv[at(k)] * (g[at(k)] - dot);
                    }
                }
            }
            vec![Some(gx)]
        }))
    }
}

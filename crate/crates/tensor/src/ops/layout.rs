//! Pure layout transforms. Each materializes a row-major result and routes
//! gradients back through the inverse layout.

use std::sync::Arc;

use crate::shape::{numel, strided_offsets, strides};
use crate::{Result, Tensor, TensorError};

impl Tensor {
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        if numel(shape) != self.numel() || shape.iter().any(|&d| d == 0) {
            return Err(TensorError::Shape(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape()
            )));
        }
        if !self.requires_grad() {
            return Ok(self.share_reshaped(shape));
        }
        Ok(Tensor::from_op(shape.to_vec(), self.to_vec(), &[self], |g, _| vec![Some(g.to_vec())]))
    }

    /// Reorder axes: output axis `i` is input axis `axes[i]`.
    pub fn permute(&self, axes: &[usize]) -> Result<Tensor> {
        let r = self.rank();
        let mut seen = vec![false; r];
        if axes.len() != r {
            return Err(TensorError::Shape(format!("permutation {axes:?} for rank {r}")));
        }
        for &a in axes {
            if a >= r {
                return Err(TensorError::Axis { axis: a, rank: r });
            }
            if std::mem::replace(&mut seen[a], true) {
                return Err(TensorError::Shape(format!("repeated axis in permutation {axes:?}")));
            }
        }
        let in_strides = strides(self.shape());
        let shape: Vec<usize> = axes.iter().map(|&a| self.shape()[a]).collect();
        let perm_strides: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
        let idx = Arc::new(strided_offsets(&shape, &perm_strides));
        Ok(self.gather(idx, &shape))
    }

    /// Output element `i` is input element `index[i]`; gradients scatter-add back.
    pub fn gather(&self, index: Arc<Vec<usize>>, shape: &[usize]) -> Tensor {
        debug_assert_eq!(index.len(), numel(shape));
        let src = self.data();
        let data = index.iter().map(|&i| src[i]).collect();
        let n = self.numel();
        Tensor::from_op(shape.to_vec(), data, &[self], move |g, _| {
            let mut gx = vec![0.0; n];
            for (&i, &gv) in index.iter().zip(g) {
                gx[i] += gv;
            }
            vec![Some(gx)]
        })
    }

    /// Elements `start..end` along `axis`.
    pub fn slice(&self, axis: usize, start: usize, end: usize) -> Result<Tensor> {
        let r = self.rank();
        if axis >= r {
            return Err(TensorError::Axis { axis, rank: r });
        }
        if start >= end || end > self.shape()[axis] {
            return Err(TensorError::Shape(format!(
                "slice {start}..{end} of axis {axis} with extent {}",
                self.shape()[axis]
            )));
        }
        let outer: usize = self.shape()[..axis].iter().product();
        let inner: usize = self.shape()[axis + 1..].iter().product();
        let ext = self.shape()[axis];
        let len = end - start;
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            data.extend_from_slice(&self.data()[(o * ext + start) * inner..(o * ext + end) * inner]);
        }
        let mut shape = self.shape().to_vec();
        shape[axis] = len;
        let n = self.numel();
        Ok(Tensor::from_op(shape, data, &[self], move |g, _| {
            let mut gx = vec![0.0; n];
            for o in 0..outer {
                gx[(o * ext + start) * inner..(o * ext + end) * inner]
                    .copy_from_slice(&g[o * len * inner..(o + 1) * len * inner]);
            }
            vec![Some(gx)]
        }))
    }

    /// Join along `axis`; all other extents must agree.
    pub fn concat(parts: &[&Tensor], axis: usize) -> Result<Tensor> {
        let first = parts
            .first()
            .ok_or_else(|| TensorError::Shape("concat of zero tensors".into()))?;
        let r = first.rank();
        if axis >= r {
            return Err(TensorError::Axis { axis, rank: r });
        }
        for p in parts {
            let ok = p.rank() == r && (0..r).all(|i| i == axis || p.shape()[i] == first.shape()[i]);
            if !ok {
                return Err(TensorError::Shape(format!(
                    "concat along {axis}: {:?} vs {:?}",
                    first.shape(),
                    p.shape()
                )));
            }
        }
        let outer: usize = first.shape()[..axis].iter().product();
        let inner: usize = first.shape()[axis + 1..].iter().product();
        let exts: Vec<usize> = parts.iter().map(|p| p.shape()[axis]).collect();
        let total: usize = exts.iter().sum();
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (p, &e) in parts.iter().zip(&exts) {
                data.extend_from_slice(&p.data()[o * e * inner..(o + 1) * e * inner]);
            }
        }
        let mut shape = first.shape().to_vec();
        shape[axis] = total;
        Ok(Tensor::from_op(shape, data, parts, move |g, needs| {
            let mut grads: Vec<Option<Vec<f64>>> = exts
                .iter()
                .zip(needs)
                .map(|(&e, &n)| n.then(|| Vec::with_capacity(outer * e * inner)))
                .collect();
            let mut off = 0;
            for _ in 0..outer {
                for (gp, &e) in grads.iter_mut().zip(&exts) {
                    if let Some(gp) = gp {
                        gp.extend_from_slice(&g[off..off + e * inner]);
                    }
                    off += e * inner;
                }
            }
            grads
        }))
    }

    /// Zero padding: `pads[i] = (before, after)` for every axis.
    pub fn pad(&self, pads: &[(usize, usize)]) -> Result<Tensor> {
        if pads.len() != self.rank() {
            return Err(TensorError::Shape(format!(
                "{} pad pairs for rank {}",
                pads.len(),
                self.rank()
            )));
        }
        let shape: Vec<usize> = self.shape().iter().zip(pads).map(|(&d, &(b, a))| d + b + a).collect();
        let out_strides = strides(&shape);
        let base: usize = pads.iter().zip(&out_strides).map(|(&(b, _), &s)| b * s).sum();
        let index: Vec<usize> = strided_offsets(self.shape(), &out_strides)
            .into_iter()
            .map(|o| o + base)
            .collect();
        let mut data = vec![0.0; numel(&shape)];
        for (&o, &v) in index.iter().zip(self.data()) {
            data[o] = v;
        }
        Ok(Tensor::from_op(shape, data, &[self], move |g, _| {
            vec![Some(index.iter().map(|&o| g[o]).collect())]
        }))
    }

    /// Reverse the order of elements along `axis`.
    pub fn flip(&self, axis: usize) -> Result<Tensor> {
        let r = self.rank();
        if axis >= r {
            return Err(TensorError::Axis { axis, rank: r });
        }
        let outer: usize = self.shape()[..axis].iter().product();
        let inner: usize = self.shape()[axis + 1..].iter().product();
        let ext = self.shape()[axis];
        let mut index = Vec::with_capacity(self.numel());
        for o in 0..outer {
            for e in (0..ext).rev() {
                let start = (o * ext + e) * inner;
                index.extend(start..start + inner);
            }
        }
        Ok(self.gather(Arc::new(index), self.shape()))
    }

    /// Insert a unit axis at `axis`.
    pub fn unsqueeze(&self, axis: usize) -> Result<Tensor> {
        if axis > self.rank() {
            return Err(TensorError::Axis { axis, rank: self.rank() });
        }
        let mut shape = self.shape().to_vec();
        shape.insert(axis, 1);
        self.reshape(&shape)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(shape: &[usize]) -> Tensor {
        Tensor::from_vec((0..numel(shape)).map(|v| v as f64).collect(), shape).unwrap()
    }

    #[test]
    fn reshape_keeps_row_major_order() {
        let t = seq(&[2, 3]);
        let r = t.reshape(&[3, 2]).unwrap();
        assert_eq!(r.data(), t.data());
        assert!(matches!(t.reshape(&[4, 2]), Err(TensorError::Shape(_))));
    }

    #[test]
    fn permute_transposes() {
        let t = seq(&[2, 3]);
        assert_eq!(t.permute(&[1, 0]).unwrap().data(), &[0., 3., 1., 4., 2., 5.]);
        assert!(t.permute(&[0, 0]).is_err());
        assert!(matches!(t.permute(&[0, 2]), Err(TensorError::Axis { .. })));
    }

    #[test]
    fn concat_then_slice() {
        let a = Tensor::from_vec(vec![1.], &[1]).unwrap();
        let b = Tensor::from_vec(vec![2., 3.], &[2]).unwrap();
        let c = Tensor::concat(&[&a, &b], 0).unwrap();
        assert_eq!(c.data(), &[1., 2., 3.]);
        assert_eq!(c.slice(0, 1, 3).unwrap().data(), b.data());
    }

    #[test]
    fn pad_and_flip() {
        let t = seq(&[2, 2]);
        let p = t.pad(&[(0, 1), (1, 0)]).unwrap();
        assert_eq!(p.shape(), &[3, 3]);
        assert_eq!(p.data(), &[0., 0., 1., 0., 2., 3., 0., 0., 0.]);
        assert_eq!(seq(&[2, 3]).flip(1).unwrap().data(), &[2., 1., 0., 5., 4., 3.]);
    }
}

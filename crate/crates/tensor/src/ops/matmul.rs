use crate::ops::gemm::{gemm_nn, gemm_nt, gemm_tn};
use crate::shape::{broadcast_shapes, numel, BroadcastMap};
use crate::{Result, Tensor, TensorError};

impl Tensor {
    /// Batched matrix product `[.., M, K] · [.., K, N] -> [.., M, N]` with
    /// broadcasting over the leading batch axes.
    pub fn matmul(&self, rhs: &Tensor) -> Result<Tensor> {
        if self.rank() < 2 || rhs.rank() < 2 {
            return Err(TensorError::Shape(format!(
                "matmul needs rank >= 2 operands, got {:?} and {:?}",
                self.shape(),
                rhs.shape()
            )));
        }
        let (m, k) = (self.shape()[self.rank() - 2], self.shape()[self.rank() - 1]);
        let (k2, n) = (rhs.shape()[rhs.rank() - 2], rhs.shape()[rhs.rank() - 1]);
        if k != k2 {
            return Err(TensorError::Shape(format!(
                "matmul inner extents differ: {:?} · {:?}",
                self.shape(),
                rhs.shape()
            )));
        }
        if rhs.rank() == 2 {
            return Ok(matmul_shared_rhs(self, rhs, m, k, n));
        }
        let ba = &self.shape()[..self.rank() - 2];
        let bb = &rhs.shape()[..rhs.rank() - 2];
        let batch = broadcast_shapes(ba, bb)?;
        let nb = numel(&batch);
        let (ma, mb) = (BroadcastMap::new(ba, &batch), BroadcastMap::new(bb, &batch));
        let mut out = vec![0.0; nb * m * n];
        for i in 0..nb {
            let (oa, ob) = (ma.offset(i), mb.offset(i));
            gemm_nn(
                m,
                k,
                n,
                &self.data()[oa * m * k..(oa + 1) * m * k],
                &rhs.data()[ob * k * n..(ob + 1) * k * n],
                &mut out[i * m * n..(i + 1) * m * n],
            );
        }
        let mut shape = batch.clone();
        shape.extend([m, n]);
        let (a, b) = (self.detach(), rhs.detach());
        let (ba, bb) = (ba.to_vec(), bb.to_vec());
        Ok(Tensor::from_op(shape, out, &[self, rhs], move |g, needs| {
            let (ma, mb) = (BroadcastMap::new(&ba, &batch), BroadcastMap::new(&bb, &batch));
            let mut ga = needs[0].then(|| vec![0.0; a.numel()]);
            let mut gb = needs[1].then(|| vec![0.0; b.numel()]);
            for i in 0..nb {
                let (oa, ob) = (ma.offset(i), mb.offset(i));
                let gi = &g[i * m * n..(i + 1) * m * n];
                if let Some(ga) = ga.as_mut() {
                    let bi = &b.data()[ob * k * n..(ob + 1) * k * n];
                    gemm_nt(m, n, k, gi, bi, &mut ga[oa * m * k..(oa + 1) * m * k]);
                }
                if let Some(gb) = gb.as_mut() {
                    let ai = &a.data()[oa * m * k..(oa + 1) * m * k];
                    gemm_tn(k, m, n, ai, gi, &mut gb[ob * k * n..(ob + 1) * k * n]);
                }
            }
            vec![ga, gb]
        }))
    }
}

/// `[.., M, K] · [K, N]`: the batch folds into the row dimension.
fn matmul_shared_rhs(a: &Tensor, b: &Tensor, m: usize, k: usize, n: usize) -> Tensor {
    let rows = a.numel() / k;
    let mut out = vec![0.0; rows * n];
    gemm_nn(rows, k, n, a.data(), b.data(), &mut out);
    let mut shape = a.shape()[..a.rank() - 2].to_vec();
    shape.extend([m, n]);
    let (av, bv) = (a.detach(), b.detach());
    Tensor::from_op(shape, out, &[a, b], move |g, needs| {
        let ga = needs[0].then(|| {
            let mut ga = vec![0.0; rows * k];
            gemm_nt(rows, n, k, g, bv.data(), &mut ga);
            ga
        });
        let gb = needs[1].then(|| {
            let mut gb = vec![0.0; k * n];
            gemm_tn(k, rows, n, av.data(), g, &mut gb);
            gb
        });
        vec![ga, gb]
    })
}

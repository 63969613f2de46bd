//! Convolutional view of a time-invariant SSM: `K[c, k] = Σ_n C[c,n]·Ā[c,n]^k·B̄[c,n]`.

use lkm_tensor::Tensor;

use super::DiscreteParams;
use crate::{Error, Result};

/// Materialize the length-`len` kernel of an LTI layer.
pub fn ssm_conv_kernel(params: &DiscreteParams, c_out: &Tensor, len: usize) -> Result<Tensor> {
    if params.per_step() {
        return Err(Error::Mode("convolution kernel needs step-invariant parameters".into()));
    }
    let (ch, st) = (params.channels(), params.state_dim());
    if params.a_bar.rank() != 2 || c_out.shape() != [ch, st] {
        return Err(Error::Shape(format!("output projection must be [{ch}, {st}], got {:?}", c_out.shape())));
    }
    if len == 0 {
        return Err(Error::Shape("kernel length must be positive".into()));
    }
    let (a, b, c) = (params.a_bar.detach(), params.b_bar.detach(), c_out.detach());
    let mut k = vec![0.0; ch * len];
    for i in 0..ch {
        for n in 0..st {
            let j = i * st + n;
            let mut pow = 1.0;
            for t in 0..len {
                k[i * len + t] += c.data()[j] * pow * b.data()[j];
                pow *= a.data()[j];
            }
        }
    }
    let out = Tensor::custom_op(vec![ch, len], k, &[&params.a_bar, &params.b_bar, c_out], move |g, needs| {
        let (av, bv, cv) = (a.data(), b.data(), c.data());
        let mut ga = vec![0.0; av.len()];
        let mut gb = vec![0.0; av.len()];
        let mut gc = vec![0.0; av.len()];
        for i in 0..ch {
            for n in 0..st {
                let j = i * st + n;
                // pow = Ā^t, dpow = t·Ā^(t-1)
                let (mut pow, mut dpow) = (1.0, 0.0);
                for t in 0..len {
                    let gk = g[i * len + t];
                    ga[j] += gk * cv[j] * dpow * bv[j];
                    gb[j] += gk * cv[j] * pow;
                    gc[j] += gk * pow * bv[j];
                    dpow = dpow * av[j] + pow;
                    pow *= av[j];
                }
            }
        }
        vec![needs[0].then_some(ga), needs[1].then_some(gb), needs[2].then_some(gc)]
    })?;
    Ok(out)
}

/// Causal per-channel convolution `y[c,t] = Σ_{k≤t} K[c,k]·x[c,t-k]`.
pub fn ssm_conv_apply(kernel: &Tensor, x: &Tensor) -> Result<Tensor> {
    if x.rank() != 2 || kernel.rank() != 2 || kernel.shape()[0] != x.shape()[0] || kernel.shape()[1] < x.shape()[1] {
        return Err(Error::Shape(format!(
            "kernel {:?} cannot be applied to input {:?}",
            kernel.shape(),
            x.shape()
        )));
    }
    let (ch, len, klen) = (x.shape()[0], x.shape()[1], kernel.shape()[1]);
    let (k, xv) = (kernel.detach(), x.detach());
    let mut y = vec![0.0; ch * len];
    for c in 0..ch {
        let (kr, xr) = (&k.data()[c * klen..], &xv.data()[c * len..(c + 1) * len]);
        for t in 0..len {
            y[c * len + t] = (0..=t).map(|j| kr[j] * xr[t - j]).sum();
        }
    }
    Ok(Tensor::custom_op(vec![ch, len], y, &[kernel, x], move |g, needs| {
        let mut gk = vec![0.0; ch * klen];
        let mut gx = vec![0.0; ch * len];
        for c in 0..ch {
            let (kr, xr) = (&k.data()[c * klen..], &xv.data()[c * len..]);
            for t in 0..len {
                let gt = g[c * len + t];
                for j in 0..=t {
                    gk[c * klen + j] += gt * xr[t - j];
                    gx[c * len + t - j] += gt * kr[j];
                }
            }
        }
        vec![needs[0].then_some(gk), needs[1].then_some(gx)]
    })?)
}

use lkm_tensor::Tensor;
use rand::Rng;

use super::{SsmLayerParams, SsmMode};
use crate::params::{uniform, ParamStore};
use crate::{Error, Result};

/// Gated selective-SSM token mixer over `[S, L, C]`:
///
/// ```text
/// x̂ = γ ⊙ (x − mean(x)) / √(var(x) + ε) + β     per token, over channels
/// u = x̂·W_u,  z = x̂·W_z
/// y = SSM→(u) [+ SSM←(u)]
/// out = (y ⊙ silu(z))·W_out
/// ```
///
/// The caller adds the residual. With `W_out = 0` the mixer is exactly zero.
#[derive(Clone, Debug)]
pub struct MambaMixer {
    pub prefix: String,
    pub channels: usize,
    pub inner: usize,
    pub state_dim: usize,
    pub bidirectional: bool,
    /// Reverse direction reuses the forward SSM parameters.
    pub share_directions: bool,
}

impl MambaMixer {
    pub fn init<R: Rng + ?Sized>(&self, store: &mut ParamStore, rng: &mut R) -> Result<()> {
        let (c, d, p) = (self.channels, self.inner, &self.prefix);
        store.insert(format!("{p}.norm_scale"), Tensor::ones(&[c])?);
        store.insert(format!("{p}.norm_shift"), Tensor::zeros(&[c])?);
        store.insert(format!("{p}.in_u"), uniform(rng, &[c, d], c)?);
        store.insert(format!("{p}.in_z"), uniform(rng, &[c, d], c)?);
        SsmLayerParams::init(SsmMode::Selective, d, self.state_dim, rng)?.store_into(store, &format!("{p}.fwd"));
        if self.bidirectional && !self.share_directions {
            SsmLayerParams::init(SsmMode::Selective, d, self.state_dim, rng)?.store_into(store, &format!("{p}.bwd"));
        }
        store.insert(format!("{p}.out"), uniform(rng, &[d, c], d)?);
        Ok(())
    }

    pub fn forward(&self, store: &ParamStore, x: &Tensor) -> Result<Tensor> {
        if x.rank() != 3 || x.shape()[2] != self.channels {
            return Err(Error::Shape(format!(
                "mixer over {} channels got tokens {:?}",
                self.channels,
                x.shape()
            )));
        }
        let p = &self.prefix;
        let get = |n: &str| store.get(&format!("{p}.{n}"));
        let xn = layer_norm(x)?.mul(get("norm_scale")?)?.add(get("norm_shift")?)?;
        let u = xn.matmul(get("in_u")?)?;
        let z = xn.matmul(get("in_z")?)?;
        let fwd = SsmLayerParams::from_store(store, &format!("{p}.fwd"), SsmMode::Selective)?;
        let mut y = fwd.forward_tokens(&u, false)?;
        if self.bidirectional {
            let bwd = if self.share_directions {
                fwd
            } else {
                SsmLayerParams::from_store(store, &format!("{p}.bwd"), SsmMode::Selective)?
            };
            y = y.add(&bwd.forward_tokens(&u, true)?)?;
        }
        Ok(y.mul(&z.silu())?.matmul(get("out")?)?)
    }
}

pub const NORM_EPS: f64 = 1e-5;

/// Standardize each token over its last axis (no affine).
pub fn layer_norm(x: &Tensor) -> Result<Tensor> {
    let c = *x.shape().last().ok_or_else(|| Error::Shape("layer norm of a scalar".into()))?;
    let rows = x.numel() / c;
    let mut y = vec![0.0; x.numel()];
    let mut inv = vec![0.0; rows];
    for (r, (row, out)) in x.data().chunks(c).zip(y.chunks_mut(c)).enumerate() {
        let mean = row.iter().sum::<f64>() / c as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
        inv[r] = 1.0 / (var + NORM_EPS).sqrt();
        for (o, v) in out.iter_mut().zip(row) {
            *o = (v - mean) * inv[r];
        }
    }
    let xhat = y.clone();
    Ok(Tensor::custom_op(x.shape().to_vec(), y, &[x], move |g, _| {
        // dx = r · (g − mean(g) − x̂ · mean(g ⊙ x̂))
        let mut dx = vec![0.0; g.len()];
        for r in 0..rows {
            let (gs, hs) = (&g[r * c..(r + 1) * c], &xhat[r * c..(r + 1) * c]);
            let mg = gs.iter().sum::<f64>() / c as f64;
            let mgh = gs.iter().zip(hs).map(|(a, b)| a * b).sum::<f64>() / c as f64;
            for j in 0..c {
                dx[r * c + j] = inv[r] * (gs[j] - mg - hs[j] * mgh);
            }
        }
        vec![Some(dx)]
    })?)
}

//! SSM layer parameters and the fused selective scan.

use std::sync::Arc;

use lkm_tensor::Tensor;
use rand::Rng;

use super::zoh::zoh_coeffs;
use super::{ssm_scan, zoh_discretize};
use crate::params::{uniform, ParamStore};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SsmMode {
    /// Δ, B, C are learned constants.
    Lti,
    /// Δ, B, C are linear projections of the current input.
    Selective,
}

#[derive(Clone, Debug)]
pub enum SsmKind {
    Lti {
        /// `[C]`, Δ = softplus(delta_raw)
        delta_raw: Tensor,
        /// `[C, N]`
        b: Tensor,
        /// `[C, N]`
        c: Tensor,
    },
    Selective {
        /// `[C, C]`
        w_delta: Tensor,
        /// `[C]`
        b_delta: Tensor,
        /// `[C, N]`
        w_b: Tensor,
        /// `[C, N]`
        w_c: Tensor,
    },
}

/// One diagonal SSM over `C` channels with `N` states per channel.
/// The state matrix is stored unconstrained: `A = -softplus(a_raw)`.
#[derive(Clone, Debug)]
pub struct SsmLayerParams {
    pub a_raw: Tensor,
    pub kind: SsmKind,
}

/// Inverse of softplus for positive arguments.
fn softplus_inv(y: f64) -> f64 {
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

impl SsmLayerParams {
    /// `A[c, n] = -(n + 1)`, Δ drawn so that softplus(bias) ∈ [1e-3, 1e-1],
    /// projections uniform with fan-in bound.
    pub fn init<R: Rng + ?Sized>(mode: SsmMode, channels: usize, state_dim: usize, rng: &mut R) -> Result<Self> {
        if channels == 0 || state_dim == 0 {
            return Err(Error::Shape("SSM layer needs at least one channel and one state".into()));
        }
        let a_raw = (0..channels * state_dim)
            .map(|i| softplus_inv((i % state_dim + 1) as f64))
            .collect();
        let a_raw = Tensor::from_vec(a_raw, &[channels, state_dim])?;
        let dt: Vec<f64> = (0..channels)
            .map(|_| softplus_inv(rng.random_range(1e-3..=1e-1)))
            .collect();
        let dt = Tensor::from_vec(dt, &[channels])?;
        let kind = match mode {
            SsmMode::Lti => SsmKind::Lti {
                delta_raw: dt,
                b: uniform(rng, &[channels, state_dim], state_dim)?,
                c: uniform(rng, &[channels, state_dim], state_dim)?,
            },
            SsmMode::Selective => SsmKind::Selective {
                w_delta: uniform(rng, &[channels, channels], channels)?,
                b_delta: dt,
                w_b: uniform(rng, &[channels, state_dim], channels)?,
                w_c: uniform(rng, &[channels, state_dim], channels)?,
            },
        };
        Ok(Self { a_raw, kind })
    }

    pub fn mode(&self) -> SsmMode {
        match self.kind {
            SsmKind::Lti { .. } => SsmMode::Lti,
            SsmKind::Selective { .. } => SsmMode::Selective,
        }
    }

    pub fn channels(&self) -> usize {
        self.a_raw.shape()[0]
    }

    pub fn state_dim(&self) -> usize {
        self.a_raw.shape()[1]
    }

    /// The (strictly negative) continuous state matrix.
    pub fn a(&self) -> Tensor {
        self.a_raw.softplus().neg()
    }

    fn slots(&self) -> Vec<(&'static str, &Tensor)> {
        let mut v = vec![("a_raw", &self.a_raw)];
        match &self.kind {
            SsmKind::Lti { delta_raw, b, c } => v.extend([("delta_raw", delta_raw), ("b", b), ("c", c)]),
            SsmKind::Selective { w_delta, b_delta, w_b, w_c } => {
                v.extend([("w_delta", w_delta), ("b_delta", b_delta), ("w_b", w_b), ("w_c", w_c)])
            }
        }
        v
    }

    pub fn store_into(&self, store: &mut ParamStore, prefix: &str) {
        for (name, t) in self.slots() {
            store.insert(format!("{prefix}.{name}"), t.clone());
        }
    }

    pub fn from_store(store: &ParamStore, prefix: &str, mode: SsmMode) -> Result<Self> {
        let get = |name: &str| store.get(&format!("{prefix}.{name}")).cloned();
        let kind = match mode {
            SsmMode::Lti => SsmKind::Lti { delta_raw: get("delta_raw")?, b: get("b")?, c: get("c")? },
            SsmMode::Selective => SsmKind::Selective {
                w_delta: get("w_delta")?,
                b_delta: get("b_delta")?,
                w_b: get("w_b")?,
                w_c: get("w_c")?,
            },
        };
        Ok(Self { a_raw: get("a_raw")?, kind })
    }

    /// Run the layer over a `[C, L]` sequence.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        if x.rank() != 2 || x.shape()[0] != self.channels() {
            return Err(Error::Shape(format!(
                "layer over {} channels got input {:?}",
                self.channels(),
                x.shape()
            )));
        }
        match &self.kind {
            SsmKind::Lti { delta_raw, b, c } => {
                let delta = delta_raw.softplus().unsqueeze(1)?;
                let disc = zoh_discretize(&self.a(), b, &delta)?;
                ssm_scan(&disc, c, x)
            }
            SsmKind::Selective { .. } => {
                let tokens = x.permute(&[1, 0])?.unsqueeze(0)?;
                let y = self.forward_tokens(&tokens, false)?;
                Ok(y.reshape(&[x.shape()[1], x.shape()[0]])?.permute(&[1, 0])?)
            }
        }
    }

    /// Selective layer over a batch of token sequences `[S, L, C]`;
    /// `reverse` scans each sequence right to left.
    pub fn forward_tokens(&self, u: &Tensor, reverse: bool) -> Result<Tensor> {
        let (delta, b, c) = selective_project(u, self)?;
        selective_scan(u, &delta, &self.a(), &b, &c, reverse)
    }
}

/// Input-dependent `(Δ, B, C)` for tokens `[.., L, C]`:
/// `Δ = softplus(x·W_Δ + b_Δ)`, `B = x·W_B`, `C = x·W_C`.
pub fn selective_project(x: &Tensor, params: &SsmLayerParams) -> Result<(Tensor, Tensor, Tensor)> {
    let SsmKind::Selective { w_delta, b_delta, w_b, w_c } = &params.kind else {
        return Err(Error::Mode("selective projection on a time-invariant layer".into()));
    };
    if x.rank() < 2 || x.shape()[x.rank() - 1] != params.channels() {
        return Err(Error::Shape(format!(
            "tokens must end in {} channels, got {:?}",
            params.channels(),
            x.shape()
        )));
    }
    let delta = x.matmul(w_delta)?.add(b_delta)?.softplus();
    Ok((delta, x.matmul(w_b)?, x.matmul(w_c)?))
}

/// Fused discretize-and-scan. `u, delta: [S, L, D]`, `a: [D, N]`,
/// `b, c: [S, L, N]` (shared across channels). Returns `[S, L, D]`.
pub fn selective_scan(u: &Tensor, delta: &Tensor, a: &Tensor, b: &Tensor, c: &Tensor, reverse: bool) -> Result<Tensor> {
    let [s, l, d] = *u.shape() else {
        return Err(Error::Shape(format!("tokens must be [S, L, D], got {:?}", u.shape())));
    };
    let n = a.shape().get(1).copied().unwrap_or(0);
    if delta.shape() != u.shape() || a.shape() != [d, n] || b.shape() != [s, l, n] || c.shape() != [s, l, n] {
        return Err(Error::Shape(format!(
            "selective scan operands u{:?} delta{:?} a{:?} b{:?} c{:?}",
            u.shape(),
            delta.shape(),
            a.shape(),
            b.shape(),
            c.shape()
        )));
    }
    let order = move |i: usize| if reverse { l - 1 - i } else { i };
    let (uv, dv, av, bv, cv) = (u.detach(), delta.detach(), a.detach(), b.detach(), c.detach());
    let mut hist = vec![0.0; s * l * d * n];
    let mut y = vec![0.0; s * l * d];
    {
        let (ud, dd, ad, bd, cd) = (uv.data(), dv.data(), av.data(), bv.data(), cv.data());
        let mut h = vec![0.0; d * n];
        for si in 0..s {
            h.iter_mut().for_each(|v| *v = 0.0);
            for i in 0..l {
                let t = si * l + order(i);
                for ch in 0..d {
                    let (x, dt) = (ud[t * d + ch], dd[t * d + ch]);
                    let mut acc = 0.0;
                    for k in 0..n {
                        let z = zoh_coeffs(dt, ad[ch * n + k]);
                        let hv = &mut h[ch * n + k];
                        *hv = z.a_bar * *hv + z.b_coef * bd[t * n + k] * x;
                        hist[(t * d + ch) * n + k] = *hv;
                        acc += cd[t * n + k] * *hv;
                    }
                    y[t * d + ch] = acc;
                }
            }
        }
    }
    let hist = Arc::new(hist);
    Ok(Tensor::custom_op(vec![s, l, d], y, &[u, delta, a, b, c], move |gy, needs| {
        let (ud, dd, ad, bd, cd) = (uv.data(), dv.data(), av.data(), bv.data(), cv.data());
        let mut gu = vec![0.0; s * l * d];
        let mut gd = vec![0.0; s * l * d];
        let mut ga = vec![0.0; d * n];
        let mut gb = vec![0.0; s * l * n];
        let mut gc = vec![0.0; s * l * n];
        let mut carry = vec![0.0; d * n];
        for si in 0..s {
            carry.iter_mut().for_each(|v| *v = 0.0);
            for i in (0..l).rev() {
                let t = si * l + order(i);
                let prev = (i > 0).then(|| si * l + order(i - 1));
                for ch in 0..d {
                    let (x, dt, g) = (ud[t * d + ch], dd[t * d + ch], gy[t * d + ch]);
                    let (mut gut, mut gdt) = (0.0, 0.0);
                    for k in 0..n {
                        let (av, bt) = (ad[ch * n + k], bd[t * n + k]);
                        let z = zoh_coeffs(dt, av);
                        let hk = hist[(t * d + ch) * n + k];
                        let hp = prev.map_or(0.0, |p| hist[(p * d + ch) * n + k]);
                        gc[t * n + k] += g * hk;
                        let lam = carry[ch * n + k] + cd[t * n + k] * g;
                        // h = Ā·h_prev + b_coef·B·x
                        let g_abar = lam * hp;
                        let g_bbar = lam * x;
                        gut += lam * z.b_coef * bt;
                        gdt += g_abar * av * z.a_bar + g_bbar * z.db_ddelta * bt;
                        ga[ch * n + k] += g_abar * dt * z.a_bar + g_bbar * z.db_da * bt;
                        gb[t * n + k] += g_bbar * z.b_coef;
                        carry[ch * n + k] = lam * z.a_bar;
                    }
                    gu[t * d + ch] = gut;
                    gd[t * d + ch] = gdt;
                }
            }
        }
        [gu, gd, ga, gb, gc].into_iter().zip(needs).map(|(g, &need)| need.then_some(g)).collect()
    })?)
}

/// Bidirectional scan over `[C, L]`: forward pass with `fwd` plus the
/// time-reversed pass with `bwd`, mapped back to forward order and summed.
pub fn bim_scan(x: &Tensor, fwd: &SsmLayerParams, bwd: &SsmLayerParams) -> Result<Tensor> {
    if fwd.channels() != bwd.channels() || fwd.state_dim() != bwd.state_dim() || fwd.mode() != bwd.mode() {
        return Err(Error::Shape(format!(
            "direction parameters disagree: {:?} vs {:?}",
            fwd.a_raw.shape(),
            bwd.a_raw.shape()
        )));
    }
    let back = bwd.forward(&x.flip(1)?)?.flip(1)?;
    Ok(fwd.forward(x)?.add(&back)?)
}

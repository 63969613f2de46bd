//! Diagonal linear recurrences over `[C, L]` inputs.
//!
//! ```text
//! h_t = Ā_t ⊙ h_{t-1} + B̄_t · x_t      h_{-1} = 0
//! y_t = Σ_n C_t[n] · h_t[n]
//! ```
//!
//! Two evaluation strategies share one contract: a left-to-right loop and an
//! associative (Brent–Kung) scan over the pair monoid
//! `(a, b) ∘ (a', b') = (a·a', a'·b + b')`.

use std::sync::Arc;

use lkm_tensor::Tensor;

use super::DiscreteParams;
use crate::{Error, Result};

/// Step strides of the scan operands, resolved from their ranks.
#[derive(Clone, Copy, Debug)]
struct Layout {
    channels: usize,
    state: usize,
    len: usize,
    /// Zero for step-invariant operands.
    param_step: usize,
    c_step: usize,
}

impl Layout {
    fn resolve(params: &DiscreteParams, c_out: &Tensor, x: &Tensor) -> Result<Self> {
        let (channels, state) = (params.channels(), params.state_dim());
        if !(2..=3).contains(&params.a_bar.rank()) {
            return Err(Error::Shape(format!(
                "discrete params must be [C, N] or [L, C, N], got {:?}",
                params.a_bar.shape()
            )));
        }
        if x.rank() != 2 || x.shape()[0] != channels {
            return Err(Error::Shape(format!(
                "scan input must be [{channels}, L], got {:?}",
                x.shape()
            )));
        }
        let len = x.shape()[1];
        let cn = channels * state;
        let step_of = |t: &Tensor, what: &str| -> Result<usize> {
            match t.shape() {
                [c, n] if *c == channels && *n == state => Ok(0),
                [l, c, n] if *l == len && *c == channels && *n == state => Ok(cn),
                s => Err(Error::Shape(format!(
                    "{what} must be [{channels}, {state}] or [{len}, {channels}, {state}], got {s:?}"
                ))),
            }
        };
        Ok(Self {
            channels,
            state,
            len,
            param_step: step_of(&params.a_bar, "discrete params")?,
            c_step: step_of(c_out, "output projection")?,
        })
    }

    fn p(&self, t: usize, c: usize, n: usize) -> usize {
        t * self.param_step + c * self.state + n
    }

    fn c(&self, t: usize, c: usize, n: usize) -> usize {
        t * self.c_step + c * self.state + n
    }

    /// Index into a dense `[L, C, N]` state history.
    fn h(&self, t: usize, c: usize, n: usize) -> usize {
        (t * self.channels + c) * self.state + n
    }
}

/// Sequential scan. The result is recorded on the tape when any operand is.
pub fn ssm_scan(params: &DiscreteParams, c_out: &Tensor, x: &Tensor) -> Result<Tensor> {
    let lay = Layout::resolve(params, c_out, x)?;
    let (a, b, cv, xv) = (params.a_bar.data(), params.b_bar.data(), c_out.data(), x.data());
    let mut hist = vec![0.0; lay.len * lay.channels * lay.state];
    let mut y = vec![0.0; lay.channels * lay.len];
    for t in 0..lay.len {
        for c in 0..lay.channels {
            let xt = xv[c * lay.len + t];
            let mut acc = 0.0;
            for n in 0..lay.state {
                let prev = if t == 0 { 0.0 } else { hist[lay.h(t - 1, c, n)] };
                let h = a[lay.p(t, c, n)] * prev + b[lay.p(t, c, n)] * xt;
                hist[lay.h(t, c, n)] = h;
                acc += cv[lay.c(t, c, n)] * h;
            }
            y[c * lay.len + t] = acc;
        }
    }
    record(params, c_out, x, lay, y, hist, |lay, a, seed| {
        // Adjoint recurrence, right to left: λ_t = C_t·gy_t + Ā_{t+1}·λ_{t+1}.
        let mut lambda = vec![0.0; seed.len()];
        let mut carry = vec![0.0; lay.channels * lay.state];
        for t in (0..lay.len).rev() {
            for c in 0..lay.channels {
                for n in 0..lay.state {
                    let k = c * lay.state + n;
                    let l = seed[lay.h(t, c, n)] + carry[k];
                    lambda[lay.h(t, c, n)] = l;
                    carry[k] = a[lay.p(t, c, n)] * l;
                }
            }
        }
        lambda
    })
}

/// Associative-scan evaluation of [`ssm_scan`]. Agrees with the sequential
/// loop to rounding; gradients flow through the same adjoint, itself
/// evaluated as a reversed associative scan.
pub fn ssm_parallel_scan(params: &DiscreteParams, c_out: &Tensor, x: &Tensor) -> Result<Tensor> {
    let lay = Layout::resolve(params, c_out, x)?;
    let (a, b, cv, xv) = (params.a_bar.data(), params.b_bar.data(), c_out.data(), x.data());
    let mut hist = vec![0.0; lay.len * lay.channels * lay.state];
    let mut ca = vec![0.0; lay.len];
    let mut cb = vec![0.0; lay.len];
    for c in 0..lay.channels {
        for n in 0..lay.state {
            for t in 0..lay.len {
                ca[t] = a[lay.p(t, c, n)];
                cb[t] = b[lay.p(t, c, n)] * xv[c * lay.len + t];
            }
            linear_recurrence_scan(&mut ca, &mut cb);
            for t in 0..lay.len {
                hist[lay.h(t, c, n)] = cb[t];
            }
        }
    }
    let mut y = vec![0.0; lay.channels * lay.len];
    for t in 0..lay.len {
        for c in 0..lay.channels {
            let mut acc = 0.0;
            for n in 0..lay.state {
                acc += cv[lay.c(t, c, n)] * hist[lay.h(t, c, n)];
            }
            y[c * lay.len + t] = acc;
        }
    }
    record(params, c_out, x, lay, y, hist, |lay, a, seed| {
        let mut lambda = vec![0.0; seed.len()];
        let mut ca = vec![0.0; lay.len];
        let mut cb = vec![0.0; lay.len];
        for c in 0..lay.channels {
            for n in 0..lay.state {
                // Reversed sequence s = L-1-t with coefficient Ā_{t+1}.
                for s in 0..lay.len {
                    let t = lay.len - 1 - s;
                    ca[s] = if t + 1 < lay.len { a[lay.p(t + 1, c, n)] } else { 0.0 };
                    cb[s] = seed[lay.h(t, c, n)];
                }
                linear_recurrence_scan(&mut ca, &mut cb);
                for s in 0..lay.len {
                    lambda[lay.h(lay.len - 1 - s, c, n)] = cb[s];
                }
            }
        }
        lambda
    })
}

/// In-place inclusive scan of `h_t = a_t·h_{t-1} + b_t` with `h_{-1} = 0`.
/// On return `b[t] = h_t`; `a` holds running products.
pub fn linear_recurrence_scan(a: &mut [f64], b: &mut [f64]) {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    let combine = |a: &mut [f64], b: &mut [f64], lo: usize, hi: usize| {
        b[hi] += a[hi] * b[lo];
        a[hi] *= a[lo];
    };
    let mut stride = 1;
    while stride < n {
        let mut i = 2 * stride - 1;
        while i < n {
            combine(a, b, i - stride, i);
            i += 2 * stride;
        }
        stride *= 2;
    }
    stride /= 2;
    while stride >= 1 {
        let mut i = 3 * stride - 1;
        while i < n {
            combine(a, b, i - stride, i);
            i += 2 * stride;
        }
        stride /= 2;
    }
}

/// Shared backward: `adjoint(lay, Ā, seed)` turns the per-state seed
/// `C_t[n]·gy_t` into the full adjoint λ, from which every operand gradient
/// follows locally.
fn record<F>(
    params: &DiscreteParams,
    c_out: &Tensor,
    x: &Tensor,
    lay: Layout,
    y: Vec<f64>,
    hist: Vec<f64>,
    adjoint: F,
) -> Result<Tensor>
where
    F: Fn(&Layout, &[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
{
    let hist = Arc::new(hist);
    let (a, b, cv, xv) = (
        params.a_bar.detach(),
        params.b_bar.detach(),
        c_out.detach(),
        x.detach(),
    );
    let inputs = [&params.a_bar, &params.b_bar, c_out, x];
    Ok(Tensor::custom_op(
        vec![lay.channels, lay.len],
        y,
        &inputs,
        move |gy, needs| {
            let (av, bv, cd, xd) = (a.data(), b.data(), cv.data(), xv.data());
            let mut seed = vec![0.0; hist.len()];
            let mut gc = needs[2].then(|| vec![0.0; cv.numel()]);
            for t in 0..lay.len {
                for c in 0..lay.channels {
                    let g = gy[c * lay.len + t];
                    for n in 0..lay.state {
                        seed[lay.h(t, c, n)] = cd[lay.c(t, c, n)] * g;
                        if let Some(gc) = gc.as_mut() {
                            gc[lay.c(t, c, n)] += g * hist[lay.h(t, c, n)];
                        }
                    }
                }
            }
            let lambda = adjoint(&lay, av, &seed);
            let mut ga = needs[0].then(|| vec![0.0; av.len()]);
            let mut gb = needs[1].then(|| vec![0.0; bv.len()]);
            let mut gx = needs[3].then(|| vec![0.0; xd.len()]);
            for t in 0..lay.len {
                for c in 0..lay.channels {
                    let xt = xd[c * lay.len + t];
                    let mut gxt = 0.0;
                    for n in 0..lay.state {
                        let l = lambda[lay.h(t, c, n)];
                        let p = lay.p(t, c, n);
                        if let Some(ga) = ga.as_mut() {
                            if t > 0 {
                                ga[p] += l * hist[lay.h(t - 1, c, n)];
                            }
                        }
                        if let Some(gb) = gb.as_mut() {
                            gb[p] += l * xt;
                        }
                        gxt += l * bv[p];
                    }
                    if let Some(gx) = gx.as_mut() {
                        gx[c * lay.len + t] = gxt;
                    }
                }
            }
            vec![ga, gb, gc, gx]
        },
    )?)
}

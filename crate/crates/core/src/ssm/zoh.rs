//! Zero-order-hold discretization of a diagonal state matrix.
//!
//! Per state coordinate with `z = Δ·a`:
//!
//! ```text
//! Ā = exp(z)
//! B̄ = (exp(z) - 1) / a · B = Δ·φ(z)·B,   φ(z) = (e^z - 1) / z
//! ```
//!
//! `φ` is singular at `z = 0`; below `|z| < 1e-8` the limit `B̄ = Δ·B` is used.

use lkm_tensor::shape::broadcast_shapes;
use lkm_tensor::Tensor;

use crate::{Error, Result};

pub const SERIES_THRESHOLD: f64 = 1e-8;

/// Discretized parameters. LTI instances are `[C, N]`; selective instances
/// carry a leading step axis, `[L, C, N]`.
#[derive(Clone, Debug)]
pub struct DiscreteParams {
    pub a_bar: Tensor,
    pub b_bar: Tensor,
}

impl DiscreteParams {
    pub fn new(a_bar: Tensor, b_bar: Tensor) -> Result<Self> {
        if a_bar.shape() != b_bar.shape() {
            return Err(Error::Shape(format!(
                "discrete params need matching shapes, got {:?} and {:?}",
                a_bar.shape(),
                b_bar.shape()
            )));
        }
        Ok(Self { a_bar, b_bar })
    }

    pub fn per_step(&self) -> bool {
        self.a_bar.rank() == 3
    }

    /// Second-to-last extent, zero for rank-1 instances.
    pub fn channels(&self) -> usize {
        let r = self.a_bar.rank();
        if r < 2 { 0 } else { self.a_bar.shape()[r - 2] }
    }

    pub fn state_dim(&self) -> usize {
        *self.a_bar.shape().last().unwrap()
    }
}

/// Scalar ZOH coefficients for one `(Δ, a)` pair.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ZohCoeffs {
    /// exp(Δa)
    pub a_bar: f64,
    /// B̄ = b_coef · B
    pub b_coef: f64,
    /// ∂b_coef/∂Δ
    pub db_ddelta: f64,
    /// ∂b_coef/∂a
    pub db_da: f64,
}

#[inline]
pub(crate) fn zoh_coeffs(delta: f64, a: f64) -> ZohCoeffs {
    let z = delta * a;
    // One transcendental per call; each branch derives the other quantity
    // where doing so loses no accuracy.
    let (a_bar, em1) = if z < -0.5 {
        let e = z.exp();
        (e, e - 1.0)
    } else {
        let m = z.exp_m1();
        (1.0 + m, m)
    };
    if z.abs() < SERIES_THRESHOLD {
        return ZohCoeffs {
            a_bar,
            b_coef: delta,
            db_ddelta: 1.0,
            db_da: 0.5 * delta * delta,
        };
    }
    // φ'(z) = (z e^z - (e^z - 1)) / z², expanded near zero to avoid cancellation.
    let dphi = if z.abs() < 1e-3 {
        0.5 + z * (1.0 / 3.0 + z * (1.0 / 8.0 + z / 30.0))
    } else {
        (z * a_bar - em1) / (z * z)
    };
    ZohCoeffs {
        a_bar,
        b_coef: em1 / a,
        db_ddelta: a_bar,
        db_da: delta * delta * dphi,
    }
}

/// Discretize `(A, B)` with timescale `Δ`. The three inputs broadcast
/// against each other; both outputs take the common shape.
pub fn zoh_discretize(a: &Tensor, b: &Tensor, delta: &Tensor) -> Result<DiscreteParams> {
    if let Some(&bad) = delta.data().iter().find(|&&d| !(d > 0.0)) {
        return Err(Error::Domain(format!("timescale must be positive, got {bad}")));
    }
    let shape = broadcast_shapes(&broadcast_shapes(a.shape(), b.shape())?, delta.shape())?;
    // Expand every operand to the common shape through taped broadcasting.
    let ones = Tensor::ones(&shape)?;
    let (a, b, delta) = (a.mul(&ones)?, b.mul(&ones)?, delta.mul(&ones)?);
    let coeffs: Vec<ZohCoeffs> = delta
        .data()
        .iter()
        .zip(a.data())
        .map(|(&d, &av)| zoh_coeffs(d, av))
        .collect();
    let coeffs = std::sync::Arc::new(coeffs);

    let a_bar_data = coeffs.iter().map(|c| c.a_bar).collect();
    let (av, dv) = (a.detach(), delta.detach());
    let cf = coeffs.clone();
    let a_bar = Tensor::custom_op(shape.clone(), a_bar_data, &[&a, &delta], move |g, needs| {
        let ga = needs[0].then(|| g.iter().zip(cf.iter()).zip(dv.data()).map(|((g, c), d)| g * d * c.a_bar).collect());
        let gd = needs[1].then(|| g.iter().zip(cf.iter()).zip(av.data()).map(|((g, c), a)| g * a * c.a_bar).collect());
        vec![ga, gd]
    })?;

    let b_bar_data = coeffs.iter().zip(b.data()).map(|(c, b)| c.b_coef * b).collect();
    let bv = b.detach();
    let b_bar = Tensor::custom_op(shape, b_bar_data, &[&a, &b, &delta], move |g, needs| {
        let ga = needs[0].then(|| g.iter().zip(coeffs.iter()).zip(bv.data()).map(|((g, c), b)| g * c.db_da * b).collect());
        let gb = needs[1].then(|| g.iter().zip(coeffs.iter()).map(|(g, c)| g * c.b_coef).collect());
        let gd = needs[2].then(|| {
            g.iter().zip(coeffs.iter()).zip(bv.data()).map(|((g, c), b)| g * c.db_ddelta * b).collect()
        });
        vec![ga, gb, gd]
    })?;
    DiscreteParams::new(a_bar, b_bar)
}

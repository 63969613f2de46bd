//! Pointwise arithmetic and activations with trailing-dimension broadcasting.

use std::sync::Arc;

use crate::shape::{broadcast_shapes, reduce_broadcast, BroadcastMap};
use crate::{Result, Tensor, TensorError};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ElementwiseKind {
    Add,
    Sub,
    Mul,
    Exp,
    Sigmoid,
    Silu,
    Softplus,
    Scale(f64),
}

/// Dispatch by kind; binary kinds need `b`, unary kinds reject it.
pub fn elementwise(kind: ElementwiseKind, a: &Tensor, b: Option<&Tensor>) -> Result<Tensor> {
    use ElementwiseKind::*;
    match (kind, b) {
        (Add, Some(b)) => a.add(b),
        (Sub, Some(b)) => a.sub(b),
        (Mul, Some(b)) => a.mul(b),
        (Exp, None) => Ok(a.exp()),
        (Sigmoid, None) => Ok(a.sigmoid()),
        (Silu, None) => Ok(a.silu()),
        (Softplus, None) => Ok(a.softplus()),
        (Scale(s), None) => Ok(a.scale(s)),
        (k, _) => Err(TensorError::Shape(format!("wrong operand count for {k:?}"))),
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

#[derive(Clone, Copy)]
enum Binary {
    Add,
    Sub,
    Mul,
    Div,
}

fn binary(a: &Tensor, b: &Tensor, op: Binary) -> Result<Tensor> {
    let shape = broadcast_shapes(a.shape(), b.shape())?;
    let ad = a.data();
    let bd = b.data();
    let data: Vec<f64> = if a.shape() == b.shape() {
        match op {
            Binary::Add => ad.iter().zip(bd).map(|(x, y)| x + y).collect(),
            Binary::Sub => ad.iter().zip(bd).map(|(x, y)| x - y).collect(),
            Binary::Mul => ad.iter().zip(bd).map(|(x, y)| x * y).collect(),
            Binary::Div => ad.iter().zip(bd).map(|(x, y)| x / y).collect(),
        }
    } else {
        let ma = BroadcastMap::new(a.shape(), &shape);
        let mb = BroadcastMap::new(b.shape(), &shape);
        let n: usize = shape.iter().product();
        (0..n)
            .map(|i| {
                let (x, y) = (ad[ma.offset(i)], bd[mb.offset(i)]);
                match op {
                    Binary::Add => x + y,
                    Binary::Sub => x - y,
                    Binary::Mul => x * y,
                    Binary::Div => x / y,
                }
            })
            .collect()
    };
    let (sa, sb, so) = (a.shape().to_vec(), b.shape().to_vec(), shape.clone());
    let (av, bv) = (a.detach(), b.detach());
    Ok(Tensor::from_op(shape, data, &[a, b], move |g, needs| {
        let ma = BroadcastMap::new(&sa, &so);
        let mb = BroadcastMap::new(&sb, &so);
        let ga = needs[0].then(|| {
            let full: Vec<f64> = match op {
                Binary::Add | Binary::Sub => g.to_vec(),
                Binary::Mul => g.iter().enumerate().map(|(i, g)| g * bv.data()[mb.offset(i)]).collect(),
                Binary::Div => g.iter().enumerate().map(|(i, g)| g / bv.data()[mb.offset(i)]).collect(),
            };
            reduce_broadcast(&full, &sa, &so)
        });
        let gb = needs[1].then(|| {
            let full: Vec<f64> = match op {
                Binary::Add => g.to_vec(),
                Binary::Sub => g.iter().map(|g| -g).collect(),
                Binary::Mul => g.iter().enumerate().map(|(i, g)| g * av.data()[ma.offset(i)]).collect(),
                Binary::Div => g
                    .iter()
                    .enumerate()
                    .map(|(i, g)| {
                        let y = bv.data()[mb.offset(i)];
                        -g * av.data()[ma.offset(i)] / (y * y)
                    })
                    .collect(),
            };
            reduce_broadcast(&full, &sb, &so)
        });
        vec![ga, gb]
    }))
}

/// Unary op whose derivative is expressed through input `x` and output `y`.
fn unary(a: &Tensor, f: impl Fn(f64) -> f64, df: fn(f64, f64) -> f64) -> Tensor {
    let data: Vec<f64> = a.data().iter().map(|&x| f(x)).collect();
    let out = Arc::new(data.clone());
    let x = a.detach();
    Tensor::from_op(a.shape().to_vec(), data, &[a], move |g, _| {
        let gx = g
            .iter()
            .zip(x.data())
            .zip(out.iter())
            .map(|((g, &x), &y)| g * df(x, y))
            .collect();
        vec![Some(gx)]
    })
}

impl Tensor {
    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        binary(self, other, Binary::Add)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        binary(self, other, Binary::Sub)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        binary(self, other, Binary::Mul)
    }

    pub fn div(&self, other: &Tensor) -> Result<Tensor> {
        binary(self, other, Binary::Div)
    }

    pub fn exp(&self) -> Tensor {
        unary(self, f64::exp, |_, y| y)
    }

    pub fn ln(&self) -> Tensor {
        unary(self, f64::ln, |x, _| 1.0 / x)
    }

    pub fn sigmoid(&self) -> Tensor {
        unary(self, sigmoid, |_, y| y * (1.0 - y))
    }

    pub fn silu(&self) -> Tensor {
        unary(
            self,
            |x| x * sigmoid(x),
            |x, _| {
                let s = sigmoid(x);
                s * (1.0 + x * (1.0 - s))
            },
        )
    }

    pub fn softplus(&self) -> Tensor {
        unary(self, softplus, |x, _| sigmoid(x))
    }

    pub fn square(&self) -> Tensor {
        unary(self, |x| x * x, |x, _| 2.0 * x)
    }

    pub fn neg(&self) -> Tensor {
        self.scale(-1.0)
    }

    pub fn scale(&self, s: f64) -> Tensor {
        let data = self.data().iter().map(|x| x * s).collect();
        Tensor::from_op(self.shape().to_vec(), data, &[self], move |g, _| {
            vec![Some(g.iter().map(|g| g * s).collect())]
        })
    }

    pub fn add_scalar(&self, s: f64) -> Tensor {
        let data = self.data().iter().map(|x| x + s).collect();
        Tensor::from_op(self.shape().to_vec(), data, &[self], |g, _| vec![Some(g.to_vec())])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(v: &[f64], s: &[usize]) -> Tensor {
        Tensor::from_vec(v.to_vec(), s).unwrap()
    }

    #[test]
    fn add_componentwise() {
        let y = elementwise(ElementwiseKind::Add, &t(&[1., 2.], &[2]), Some(&t(&[3., 4.], &[2]))).unwrap();
        assert_eq!(y.data(), &[4., 6.]);
    }

    #[test]
    fn exp_and_silu_at_zero() {
        assert_eq!(t(&[0.], &[1]).exp().data(), &[1.0]);
        assert_eq!(t(&[0.], &[1]).silu().data(), &[0.0]);
        assert!((t(&[0.], &[1]).softplus().item() - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn broadcasting_trailing_axes() {
        let a = t(&[1., 2., 3., 4., 5., 6.], &[2, 3]);
        let b = t(&[10., 20., 30.], &[3]);
        assert_eq!(a.add(&b).unwrap().data(), &[11., 22., 33., 14., 25., 36.]);
        let c = t(&[1., 2.], &[2, 1]);
        assert_eq!(a.mul(&c).unwrap().data(), &[1., 2., 3., 8., 10., 12.]);
    }

    #[test]
    fn broadcast_mismatch_is_error() {
        let err = t(&[1., 2., 3.], &[3]).add(&t(&[1., 2.], &[2])).unwrap_err();
        assert!(matches!(err, TensorError::Broadcast { .. }));
    }

    #[test]
    fn unary_kind_rejects_second_operand() {
        let a = t(&[1.], &[1]);
        assert!(elementwise(ElementwiseKind::Exp, &a, Some(&a)).is_err());
        assert!(elementwise(ElementwiseKind::Mul, &a, None).is_err());
    }

    #[test]
    fn softplus_is_stable_for_large_inputs() {
        let y = t(&[-800., 0., 800.], &[3]).softplus();
        assert_eq!(y.data()[0], 0.0);
        assert_eq!(y.data()[2], 800.0);
    }
}

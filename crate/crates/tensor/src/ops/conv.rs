//! Cross-correlation and its transpose over 1, 2 or 3 spatial axes.
//!
//! Both lower to one matrix product per group through an im2col buffer whose
//! rows are ordered (input channel, kernel offset) in row-major order.

use std::sync::Arc;

use crate::ops::gemm::{gemm_nn, gemm_nt, gemm_tn};
use crate::shape::numel;
use crate::{Result, Tensor, TensorError};

/// Spatial geometry promoted to three axes (missing leading axes are unit-sized).
#[derive(Clone, Copy, Debug)]
struct Geometry {
    input: [usize; 3],
    kernel: [usize; 3],
    stride: [usize; 3],
    pad: [usize; 3],
    output: [usize; 3],
}

impl Geometry {
    fn new(input: &[usize], kernel: &[usize], stride: usize, pad: usize) -> Result<Self> {
        let r = input.len();
        if !(1..=3).contains(&r) || kernel.len() != r {
            return Err(TensorError::Shape(format!(
                "convolution over {r} spatial axes with kernel {kernel:?}"
            )));
        }
        if stride == 0 {
            return Err(TensorError::Shape("stride must be positive".into()));
        }
        let mut g = Geometry {
            input: [1; 3],
            kernel: [1; 3],
            stride: [1; 3],
            pad: [0; 3],
            output: [1; 3],
        };
        for i in 0..r {
            let a = 3 - r + i;
            g.input[a] = input[i];
            g.kernel[a] = kernel[i];
            g.stride[a] = stride;
            g.pad[a] = pad;
            let span = input[i] + 2 * pad;
            if span < kernel[i] {
                return Err(TensorError::Shape(format!(
                    "kernel {kernel:?} larger than padded input {input:?}"
                )));
            }
            g.output[a] = (span - kernel[i]) / stride + 1;
        }
        Ok(g)
    }

    fn kernel_len(&self) -> usize {
        self.kernel.iter().product()
    }

    fn out_len(&self) -> usize {
        self.output.iter().product()
    }

    fn in_len(&self) -> usize {
        self.input.iter().product()
    }

    fn output_shape(&self, rank: usize) -> Vec<usize> {
        self.output[3 - rank..].to_vec()
    }
}

/// Unfold `x` ([channels, input...]) into `[channels * kernel_len, out_len]`.
fn im2col(x: &[f64], channels: usize, g: &Geometry) -> Vec<f64> {
    let (kl, ol, il) = (g.kernel_len(), g.out_len(), g.in_len());
    let mut cols = vec![0.0; channels * kl * ol];
    let [id, ih, iw] = g.input;
    let [od, oh, ow] = g.output;
    let [kd, kh, kw] = g.kernel;
    let [sd, sh, sw] = g.stride;
    let [pd, ph, pw] = g.pad;
    for c in 0..channels {
        let xc = &x[c * il..(c + 1) * il];
        for a in 0..kd {
            for b in 0..kh {
                for e in 0..kw {
                    let row = ((c * kd + a) * kh + b) * kw + e;
                    let dst = &mut cols[row * ol..(row + 1) * ol];
                    for z in 0..od {
                        let zi = (z * sd + a) as isize - pd as isize;
                        if zi < 0 || zi >= id as isize {
                            continue;
                        }
                        for y in 0..oh {
                            let yi = (y * sh + b) as isize - ph as isize;
                            if yi < 0 || yi >= ih as isize {
                                continue;
                            }
                            let src = &xc[(zi as usize * ih + yi as usize) * iw..][..iw];
                            let out = &mut dst[(z * oh + y) * ow..][..ow];
                            for (xo, o) in out.iter_mut().enumerate() {
                                let xi = (xo * sw + e) as isize - pw as isize;
                                if xi >= 0 && (xi as usize) < iw {
                                    *o = src[xi as usize];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatter-add columns back onto `[channels, input...]`.
fn col2im(cols: &[f64], channels: usize, g: &Geometry) -> Vec<f64> {
    let (kl, ol, il) = (g.kernel_len(), g.out_len(), g.in_len());
    let mut x = vec![0.0; channels * il];
    let [id, ih, iw] = g.input;
    let [od, oh, ow] = g.output;
    let [kd, kh, kw] = g.kernel;
    let [sd, sh, sw] = g.stride;
    let [pd, ph, pw] = g.pad;
    for c in 0..channels {
        let xc = &mut x[c * il..(c + 1) * il];
        for a in 0..kd {
            for b in 0..kh {
                for e in 0..kw {
                    let row = ((c * kd + a) * kh + b) * kw + e;
                    let src = &cols[row * ol..(row + 1) * ol];
                    debug_assert!(row < channels * kl);
                    for z in 0..od {
                        let zi = (z * sd + a) as isize - pd as isize;
                        if zi < 0 || zi >= id as isize {
                            continue;
                        }
                        for y in 0..oh {
                            let yi = (y * sh + b) as isize - ph as isize;
                            if yi < 0 || yi >= ih as isize {
                                continue;
                            }
                            let dst = &mut xc[(zi as usize * ih + yi as usize) * iw..][..iw];
                            let s = &src[(z * oh + y) * ow..][..ow];
                            for (xo, v) in s.iter().enumerate() {
                                let xi = (xo * sw + e) as isize - pw as isize;
                                if xi >= 0 && (xi as usize) < iw {
                                    dst[xi as usize] += v;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    x
}

impl Tensor {
    /// 2D cross-correlation of `[C_in, H, W]` with `[C_out, C_in/groups, kh, kw]`.
    pub fn conv2d(&self, weight: &Tensor, stride: usize, padding: usize, groups: usize) -> Result<Tensor> {
        if self.rank() != 3 || weight.rank() != 4 {
            return Err(TensorError::Shape(format!(
                "conv2d expects [C,H,W] and [Co,Ci,kh,kw], got {:?} and {:?}",
                self.shape(),
                weight.shape()
            )));
        }
        self.conv(weight, stride, padding, groups)
    }

    /// Cross-correlation of `[C_in, spatial...]` with `[C_out, C_in/groups, kernel...]`
    /// for one to three spatial axes.
    pub fn conv(&self, weight: &Tensor, stride: usize, padding: usize, groups: usize) -> Result<Tensor> {
        let sr = self.rank().saturating_sub(1);
        if weight.rank() != sr + 2 || sr == 0 {
            return Err(TensorError::Shape(format!(
                "weight {:?} does not match input {:?}",
                weight.shape(),
                self.shape()
            )));
        }
        let cin = self.shape()[0];
        let cout = weight.shape()[0];
        if groups == 0 || cin % groups != 0 || cout % groups != 0 {
            return Err(TensorError::Group { channels: cin, groups });
        }
        let (cin_g, cout_g) = (cin / groups, cout / groups);
        if weight.shape()[1] != cin_g {
            return Err(TensorError::Shape(format!(
                "weight {:?} expects {} input channels per group, input has {}",
                weight.shape(),
                weight.shape()[1],
                cin_g
            )));
        }
        let geo = Geometry::new(&self.shape()[1..], &weight.shape()[2..], stride, padding)?;
        let (kl, ol) = (geo.kernel_len(), geo.out_len());
        let rows_g = cin_g * kl;
        let cols = Arc::new(im2col(self.data(), cin, &geo));
        let w = weight.detach();
        let mut out = vec![0.0; cout * ol];
        for gi in 0..groups {
            gemm_nn(
                cout_g,
                rows_g,
                ol,
                &w.data()[gi * cout_g * rows_g..(gi + 1) * cout_g * rows_g],
                &cols[gi * rows_g * ol..(gi + 1) * rows_g * ol],
                &mut out[gi * cout_g * ol..(gi + 1) * cout_g * ol],
            );
        }
        let mut shape = vec![cout];
        shape.extend(geo.output_shape(sr));
        Ok(Tensor::from_op(shape, out, &[self, weight], move |g, needs| {
            let gx = needs[0].then(|| {
                let mut gcols = vec![0.0; cin * kl * ol];
                for gi in 0..groups {
                    gemm_tn(
                        rows_g,
                        cout_g,
                        ol,
                        &w.data()[gi * cout_g * rows_g..(gi + 1) * cout_g * rows_g],
                        &g[gi * cout_g * ol..(gi + 1) * cout_g * ol],
                        &mut gcols[gi * rows_g * ol..(gi + 1) * rows_g * ol],
                    );
                }
                col2im(&gcols, cin, &geo)
            });
            let gw = needs[1].then(|| {
                let mut gw = vec![0.0; cout * rows_g];
                for gi in 0..groups {
                    gemm_nt(
                        cout_g,
                        ol,
                        rows_g,
                        &g[gi * cout_g * ol..(gi + 1) * cout_g * ol],
                        &cols[gi * rows_g * ol..(gi + 1) * rows_g * ol],
                        &mut gw[gi * cout_g * rows_g..(gi + 1) * cout_g * rows_g],
                    );
                }
                gw
            });
            vec![gx, gw]
        }))
    }

    /// Transposed convolution (no padding) of `[C_in, spatial...]` with
    /// `[C_in, C_out, kernel...]`; each extent becomes `(n - 1) * stride + k`.
    pub fn conv_transpose(&self, weight: &Tensor, stride: usize) -> Result<Tensor> {
        let sr = self.rank().saturating_sub(1);
        if weight.rank() != sr + 2 || sr == 0 || weight.shape()[0] != self.shape()[0] {
            return Err(TensorError::Shape(format!(
                "transposed weight {:?} does not match input {:?}",
                weight.shape(),
                self.shape()
            )));
        }
        if stride == 0 {
            return Err(TensorError::Shape("stride must be positive".into()));
        }
        let cin = self.shape()[0];
        let cout = weight.shape()[1];
        let kernel = &weight.shape()[2..];
        let out_sp: Vec<usize> = self.shape()[1..]
            .iter()
            .zip(kernel)
            .map(|(&n, &k)| (n - 1) * stride + k)
            .collect();
        let geo = Geometry::new(&out_sp, kernel, stride, 0)?;
        let (kl, pin) = (geo.kernel_len(), geo.out_len());
        debug_assert_eq!(pin, numel(&self.shape()[1..]));
        let mut cols = vec![0.0; cout * kl * pin];
        gemm_tn(cout * kl, cin, pin, weight.data(), self.data(), &mut cols);
        let out = col2im(&cols, cout, &geo);
        let mut shape = vec![cout];
        shape.extend(out_sp);
        let (x, w) = (self.detach(), weight.detach());
        Ok(Tensor::from_op(shape, out, &[self, weight], move |g, needs| {
            let gcols = im2col(g, cout, &geo);
            let gx = needs[0].then(|| {
                let mut gx = vec![0.0; cin * pin];
                gemm_nn(cin, cout * kl, pin, w.data(), &gcols, &mut gx);
                gx
            });
            let gw = needs[1].then(|| {
                let mut gw = vec![0.0; cin * cout * kl];
                gemm_nt(cin, pin, cout * kl, x.data(), &gcols, &mut gw);
                gw
            });
            vec![gx, gw]
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pointwise_weight_scales() {
        let x = Tensor::ones(&[1, 3, 3]).unwrap();
        let w = Tensor::full(&[1, 1, 1, 1], 2.0).unwrap();
        let y = x.conv2d(&w, 1, 0, 1).unwrap();
        assert_eq!(y.shape(), &[1, 3, 3]);
        assert!(y.data().iter().all(|&v| v == 2.0));
    }

    #[test]
    fn centered_identity_kernel_reproduces_input() {
        let x = Tensor::from_vec((0..20).map(|v| v as f64 * 0.3 - 1.0).collect(), &[1, 4, 5]).unwrap();
        let mut k = vec![0.0; 9];
        k[4] = 1.0;
        let w = Tensor::from_vec(k, &[1, 1, 3, 3]).unwrap();
        assert_eq!(x.conv2d(&w, 1, 1, 1).unwrap().data(), x.data());
    }

    #[test]
    fn group_mismatch() {
        let x = Tensor::ones(&[3, 4, 4]).unwrap();
        let w = Tensor::ones(&[2, 1, 3, 3]).unwrap();
        assert!(matches!(x.conv2d(&w, 1, 1, 2), Err(TensorError::Group { .. })));
    }

    #[test]
    fn stride_two_output_extent() {
        let x = Tensor::ones(&[1, 7, 8]).unwrap();
        let w = Tensor::ones(&[2, 1, 3, 3]).unwrap();
        let y = x.conv2d(&w, 2, 1, 1).unwrap();
        assert_eq!(y.shape(), &[2, 4, 4]);
    }

    #[test]
    fn transpose_doubles_extent_with_2x2_stride_2() {
        let x = Tensor::from_vec(vec![1., 2., 3., 4.], &[1, 2, 2]).unwrap();
        let w = Tensor::ones(&[1, 1, 2, 2]).unwrap();
        let y = x.conv_transpose(&w, 2).unwrap();
        assert_eq!(y.shape(), &[1, 4, 4]);
        assert_eq!(
            y.data(),
            &[1., 1., 2., 2., 1., 1., 2., 2., 3., 3., 4., 4., 3., 3., 4., 4.]
        );
    }

    #[test]
    fn conv3d_shape() {
        let x = Tensor::ones(&[2, 4, 6, 6]).unwrap();
        let w = Tensor::ones(&[4, 2, 3, 3, 3]).unwrap();
        assert_eq!(x.conv(&w, 2, 1, 1).unwrap().shape(), &[4, 2, 3, 3]);
    }
}

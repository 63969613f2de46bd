//! Central finite differences as an independent check on backward rules.

use crate::{Result, Tape, Tensor, TensorError};

/// Max over all coordinates of `|analytic - numeric| / max(1, |numeric|)`
/// for a scalar-valued `f` at `x`.
pub fn finite_diff_check<F>(f: F, x: &Tensor, h: f64) -> Result<f64>
where
    F: Fn(&Tensor) -> Result<Tensor>,
{
    let coords: Vec<usize> = (0..x.numel()).collect();
    finite_diff_check_at(f, x, h, &coords)
}

/// Same as [`finite_diff_check`] restricted to the listed flat coordinates.
pub fn finite_diff_check_at<F>(f: F, x: &Tensor, h: f64, coords: &[usize]) -> Result<f64>
where
    F: Fn(&Tensor) -> Result<Tensor>,
{
    let tape = Tape::new();
    let xv = tape.watch(&x.detach());
    let y = f(&xv)?;
    if y.numel() != 1 {
        return Err(TensorError::Grad(format!("f must be scalar, got {:?}", y.shape())));
    }
    let analytic = if y.requires_grad() {
        tape.backward(&y)?.get_data(&xv).expect("x is a leaf")
    } else {
        vec![0.0; x.numel()]
    };
    let mut worst = 0.0f64;
    for &i in coords {
        let eval = |delta: f64| -> Result<f64> {
            let mut v = x.to_vec();
            v[i] += delta;
            Ok(f(&Tensor::from_vec(v, x.shape())?)?.item())
        };
        let numeric = (eval(h)? - eval(-h)?) / (2.0 * h);
        let err = (analytic[i] - numeric).abs() / numeric.abs().max(1.0);
        worst = worst.max(err);
    }
    Ok(worst)
}

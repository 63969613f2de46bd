#![allow(dead_code)]

use lkm_core::Result;
use lkm_tensor::{finite_diff_check, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec((0..n).map(|_| rng.random_range(lo..hi)).collect(), shape).unwrap()
}

pub fn t(v: &[f64], shape: &[usize]) -> Tensor {
    Tensor::from_vec(v.to_vec(), shape).unwrap()
}

/// Worst finite-difference error over every operand of `f`, each perturbed
/// in turn with the others held fixed.
pub fn fd_all(operands: &[Tensor], f: impl Fn(&[Tensor]) -> Result<Tensor>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..operands.len() {
        let err = finite_diff_check(
            |x| {
                let mut ops = operands.to_vec();
                ops[i] = x.clone();
                f(&ops).map_err(|e| lkm_tensor::TensorError::Shape(e.to_string()))
            },
            &operands[i],
            1e-5,
        )
        .unwrap();
        worst = worst.max(err);
    }
    worst
}

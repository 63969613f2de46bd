//! Every differentiable primitive against central finite differences
//! (h = 1e-5, double precision) on ten seeds.

use lkm_tensor::{finite_diff_check, ReduceKind, Result, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-6;
const H: f64 = 1e-5;

fn random(shape: &[usize], rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec((0..n).map(|_| rng.random_range(lo..hi)).collect(), shape).unwrap()
}

/// Contract an output with a fixed random weighting so every output
/// coordinate contributes a distinct cotangent.
fn project(y: &Tensor, seed: u64) -> Result<Tensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37);
    let w = random(y.shape(), &mut rng, -1.0, 1.0);
    Ok(y.mul(&w)?.sum_all())
}

fn check(name: &str, shape: &[usize], lo: f64, hi: f64, f: impl Fn(&Tensor, u64) -> Result<Tensor>) {
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random(shape, &mut rng, lo, hi);
        let err = finite_diff_check(|x| project(&f(x, seed)?, seed), &x, H).unwrap();
        assert!(err < TOL, "{name} seed {seed}: relative error {err:e}");
    }
}

fn fixed(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(31).wrapping_add(5));
    random(shape, &mut rng, -1.0, 1.0)
}

#[test]
fn unary_primitives() {
    check("exp", &[2, 3], -1.0, 1.0, |x, _| Ok(x.exp()));
    check("sigmoid", &[2, 3], -3.0, 3.0, |x, _| Ok(x.sigmoid()));
    check("silu", &[2, 3], -3.0, 3.0, |x, _| Ok(x.silu()));
    check("softplus", &[2, 3], -3.0, 3.0, |x, _| Ok(x.softplus()));
    check("scale", &[4], -1.0, 1.0, |x, _| Ok(x.scale(-2.5)));
    check("ln", &[4], 0.5, 2.0, |x, _| Ok(x.ln()));
    check("square", &[4], -2.0, 2.0, |x, _| Ok(x.square()));
}

#[test]
fn binary_primitives_with_broadcasting() {
    check("add lhs", &[2, 3], -1.0, 1.0, |x, s| x.add(&fixed(&[3], s)));
    check("add rhs", &[3], -1.0, 1.0, |x, s| fixed(&[2, 3], s).add(x));
    check("sub rhs", &[2, 1], -1.0, 1.0, |x, s| fixed(&[2, 3], s).sub(x));
    check("mul lhs", &[2, 3], -1.0, 1.0, |x, s| x.mul(&fixed(&[2, 1], s)));
    check("mul rhs", &[3, 1, 1], -1.0, 1.0, |x, s| fixed(&[3, 2, 2], s).mul(x));
    check("mul self", &[3], -1.0, 1.0, |x, _| x.mul(x));
    check("div", &[3], 1.0, 2.0, |x, s| fixed(&[2, 3], s).div(x));
}

#[test]
fn matmul_both_sides() {
    check("matmul lhs", &[3, 4], -1.0, 1.0, |x, s| x.matmul(&fixed(&[4, 2], s)));
    check("matmul rhs", &[4, 2], -1.0, 1.0, |x, s| fixed(&[2, 3, 4], s).matmul(x));
    check("batched lhs", &[2, 3, 4], -1.0, 1.0, |x, s| x.matmul(&fixed(&[2, 4, 2], s)));
    check("batched rhs", &[1, 4, 2], -1.0, 1.0, |x, s| fixed(&[3, 3, 4], s).matmul(x));
}

#[test]
fn convolutions() {
    check("conv input", &[2, 5, 5], -1.0, 1.0, |x, s| x.conv2d(&fixed(&[3, 2, 3, 3], s), 2, 1, 1));
    check("conv weight", &[4, 1, 3, 3], -1.0, 1.0, |w, s| fixed(&[2, 5, 4], s).conv2d(w, 1, 1, 2));
    check("depthwise", &[2, 1, 3, 3], -1.0, 1.0, |w, s| fixed(&[2, 4, 4], s).conv2d(w, 1, 1, 2));
    check("conv3d", &[1, 4, 3, 3], -1.0, 1.0, |x, s| x.conv(&fixed(&[2, 1, 3, 3, 3], s), 2, 1, 1));
    check("convT input", &[2, 3, 3], -1.0, 1.0, |x, s| x.conv_transpose(&fixed(&[2, 3, 2, 2], s), 2));
    check("convT weight", &[2, 3, 2, 2], -1.0, 1.0, |w, s| fixed(&[2, 3, 2], s).conv_transpose(w, 2));
}

#[test]
fn layout_primitives() {
    check("reshape", &[2, 3], -1.0, 1.0, |x, _| x.reshape(&[3, 2]));
    check("permute", &[2, 3, 4], -1.0, 1.0, |x, _| x.permute(&[2, 0, 1]));
    check("slice", &[3, 4], -1.0, 1.0, |x, _| x.slice(1, 1, 3));
    check("concat", &[2, 2], -1.0, 1.0, |x, s| Tensor::concat(&[&fixed(&[2, 1], s), x, x], 1));
    check("pad", &[2, 3], -1.0, 1.0, |x, _| x.pad(&[(1, 0), (0, 2)]));
    check("flip", &[2, 3], -1.0, 1.0, |x, _| x.flip(1));
}

#[test]
fn reductions_and_softmax() {
    check("sum", &[2, 3, 2], -1.0, 1.0, |x, _| x.reduce(ReduceKind::Sum, &[0, 2], false));
    check("mean", &[2, 3], -1.0, 1.0, |x, _| x.reduce(ReduceKind::Mean, &[1], true));
    check("max", &[3, 4], -1.0, 1.0, |x, _| x.reduce(ReduceKind::Max, &[1], false));
    check("softmax", &[3, 4], -2.0, 2.0, |x, _| x.softmax(0));
}

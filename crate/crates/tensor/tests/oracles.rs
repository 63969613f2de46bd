use lkm_tensor::{Tape, Tensor, TensorError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec((0..n).map(|_| rng.random_range(-1.0..1.0)).collect(), shape).unwrap()
}

#[test]
fn matmul_matches_triple_loop_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..10 {
        let a = random(&[3, 4], &mut rng);
        let b = random(&[4, 2], &mut rng);
        let y = a.matmul(&b).unwrap();
        for i in 0..3 {
            for j in 0..2 {
                let mut s = 0.0;
                for k in 0..4 {
                    s += a.at(&[i, k]) * b.at(&[k, j]);
                }
                assert_eq!(y.at(&[i, j]), s);
            }
        }
    }
}

/// Direct nested-loop cross-correlation, skipping out-of-range taps.
fn conv_oracle(x: &Tensor, w: &Tensor, stride: usize, pad: usize, groups: usize) -> Vec<f64> {
    let (cin, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (cout, cig, kh, kw) = (w.shape()[0], w.shape()[1], w.shape()[2], w.shape()[3]);
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (wd + 2 * pad - kw) / stride + 1;
    let cog = cout / groups;
    let mut out = Vec::new();
    for co in 0..cout {
        let g = co / cog;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut s = 0.0;
                for ci in 0..cig {
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let iy = (oy * stride + ky) as isize - pad as isize;
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                continue;
                            }
                            s += w.at(&[co, ci, ky, kx]) * x.at(&[g * cig + ci, iy as usize, ix as usize]);
                        }
                    }
                }
                out.push(s);
            }
        }
    }
    assert_eq!(cin % groups, 0);
    out
}

#[test]
fn conv2d_matches_nested_loops_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for &(stride, pad, groups, cout) in &[(1, 0, 1, 3), (1, 1, 1, 2), (2, 1, 1, 4), (1, 1, 2, 4), (2, 2, 2, 2)] {
        let x = random(&[2, 5, 5], &mut rng);
        let w = random(&[cout, 2 / groups, 3, 3], &mut rng);
        let y = x.conv2d(&w, stride, pad, groups).unwrap();
        assert_eq!(y.data(), conv_oracle(&x, &w, stride, pad, groups).as_slice());
    }
}

#[test]
fn backward_examples() {
    let tape = Tape::new();
    let x = tape.watch(&Tensor::from_vec(vec![1.0, 2.0], &[2]).unwrap());
    let g = tape.backward(&x.mul(&x).unwrap().sum_all()).unwrap();
    assert_eq!(g.get(&x).unwrap().data(), &[2.0, 4.0]);

    let tape = Tape::new();
    let x = tape.watch(&Tensor::full(&[2, 3, 4], 0.7).unwrap());
    let g = tape.backward(&x.sum_all()).unwrap();
    assert!(g.get(&x).unwrap().data().iter().all(|&v| v == 1.0));
}

#[test]
fn non_scalar_loss_is_rejected() {
    let tape = Tape::new();
    let x = tape.watch(&Tensor::ones(&[3]).unwrap());
    let y = x.exp();
    assert!(matches!(tape.backward(&y), Err(TensorError::Grad(_))));
}

#[test]
fn untracked_tensors_have_no_gradient() {
    let tape = Tape::new();
    let x = tape.watch(&Tensor::ones(&[2]).unwrap());
    let c = Tensor::ones(&[2]).unwrap();
    let y = x.mul(&c).unwrap();
    let g = tape.backward(&y.sum_all()).unwrap();
    assert!(!c.requires_grad());
    assert!(g.get(&c).is_none());
    assert!(g.get(&y).is_none());
}

#[test]
fn repeated_backward_is_bit_identical() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let tape = Tape::new();
        let x = tape.watch(&random(&[2, 6, 6], &mut rng));
        let w = tape.watch(&random(&[3, 2, 3, 3], &mut rng));
        let y = x.conv2d(&w, 2, 1, 1).unwrap().silu().softmax(0).unwrap();
        let loss = y.mul(&y).unwrap().sum_all();
        let g = tape.backward(&loss).unwrap();
        (g.get_data(&x).unwrap(), g.get_data(&w).unwrap())
    };
    let (a, b) = (run(), run());
    assert_eq!(a.0.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.0.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    assert_eq!(a.1.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.1.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
}

#[test]
fn f32_storage_rounds_results() {
    let x = Tensor::from_vec(vec![0.1, 1.0 / 3.0], &[2])
        .unwrap()
        .with_precision(lkm_tensor::Precision::F32);
    let y = x.scale(3.0);
    for &v in y.data() {
        assert_eq!(v, v as f32 as f64);
    }
    assert_eq!(y.precision(), lkm_tensor::Precision::F32);
}

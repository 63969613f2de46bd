//! Dense matrix kernels on row-major slices.
//!
//! Every output element accumulates its products in ascending inner-index
//! order starting from the existing value, so results match a naive triple
//! loop bit for bit.

const MR: usize = 4;
const NR: usize = 8;

/// `c[m×n] += a[m×k] · b[k×n]`
///
/// Register-tiled: each `MR × NR` tile of `c` is loaded once, receives all
/// `k` products in order, and is stored back.
pub fn gemm_nn(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let full = n / NR * NR;
    let mut panel = vec![0.0; k * NR];
    for j0 in (0..full).step_by(NR) {
        for p in 0..k {
            panel[p * NR..(p + 1) * NR].copy_from_slice(&b[p * n + j0..p * n + j0 + NR]);
        }
        let mut i = 0;
        while i + MR <= m {
            tile(k, n, &a[i * k..(i + MR) * k], &panel, &mut c[i * n + j0..], MR);
            i += MR;
        }
        if i < m {
            tile(k, n, &a[i * k..m * k], &panel, &mut c[i * n + j0..], m - i);
        }
    }
    if full < n {
        for i in 0..m {
            for j in full..n {
                let mut acc = c[i * n + j];
                for p in 0..k {
                    acc += a[i * k + p] * b[p * n + j];
                }
                c[i * n + j] = acc;
            }
        }
    }
}

#[inline(always)]
fn tile(k: usize, n: usize, a: &[f64], panel: &[f64], c: &mut [f64], rows: usize) {
    let mut acc = [[0.0f64; NR]; MR];
    for r in 0..rows {
        acc[r].copy_from_slice(&c[r * n..r * n + NR]);
    }
    if rows == MR {
        let (a0, a1, a2, a3) = (&a[..k], &a[k..2 * k], &a[2 * k..3 * k], &a[3 * k..4 * k]);
        for p in 0..k {
            let bp: &[f64; NR] = panel[p * NR..(p + 1) * NR].try_into().unwrap();
            let av = [a0[p], a1[p], a2[p], a3[p]];
            for r in 0..MR {
                for j in 0..NR {
                    acc[r][j] += av[r] * bp[j];
                }
            }
        }
    } else {
        for p in 0..k {
            let bp = &panel[p * NR..(p + 1) * NR];
            for r in 0..rows {
                let av = a[r * k + p];
                for j in 0..NR {
                    acc[r][j] += av * bp[j];
                }
            }
        }
    }
    for r in 0..rows {
        c[r * n..r * n + NR].copy_from_slice(&acc[r]);
    }
}

/// Row-major transpose of a `rows × cols` matrix.
pub fn transpose(rows: usize, cols: usize, a: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.len(), rows * cols);
    let mut out = vec![0.0; rows * cols];
    const B: usize = 32;
    for r0 in (0..rows).step_by(B) {
        for c0 in (0..cols).step_by(B) {
            for r in r0..(r0 + B).min(rows) {
                for c in c0..(c0 + B).min(cols) {
                    out[c * rows + r] = a[r * cols + c];
                }
            }
        }
    }
    out
}

/// `c[m×n] += aᵀ · b` where `a` is stored `k×m`.
pub fn gemm_tn(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    let at = transpose(k, m, a);
    gemm_nn(m, k, n, &at, b, c);
}

/// `c[m×n] += a · bᵀ` where `b` is stored `n×k`.
pub fn gemm_nt(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    let bt = transpose(n, k, b);
    gemm_nn(m, k, n, a, &bt, c);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(m: usize, k: usize, n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                let mut s = 0.0;
                for p in 0..k {
                    s += a[i * k + p] * b[p * n + j];
                }
                c[i * n + j] = s;
            }
        }
        c
    }

    #[test]
    fn blocked_kernel_is_bit_identical_to_triple_loop() {
        for &(m, k, n) in &[(1, 1, 1), (5, 7, 3), (9, 13, 300), (4, 1, 257)] {
            let a: Vec<f64> = (0..m * k).map(|i| ((i * 37 % 17) as f64 - 8.0) / 7.3).collect();
            let b: Vec<f64> = (0..k * n).map(|i| ((i * 53 % 23) as f64 - 11.0) / 3.1).collect();
            let mut c = vec![0.0; m * n];
            gemm_nn(m, k, n, &a, &b, &mut c);
            assert_eq!(c, naive(m, k, n, &a, &b));
        }
    }

    #[test]
    fn transposed_variants() {
        let (m, k, n) = (3, 4, 5);
        let a: Vec<f64> = (0..m * k).map(|i| i as f64 * 0.5 - 2.0).collect();
        let b: Vec<f64> = (0..k * n).map(|i| 1.0 - i as f64 * 0.25).collect();
        let expected = naive(m, k, n, &a, &b);
        let mut c = vec![0.0; m * n];
        gemm_tn(m, k, n, &transpose(m, k, &a), &b, &mut c);
        assert_eq!(c, expected);
        let mut c = vec![0.0; m * n];
        gemm_nt(m, k, n, &a, &transpose(k, n, &b), &mut c);
        assert_eq!(c, expected);
    }
}

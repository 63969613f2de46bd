mod common;

use common::{oracle_boundary, oracle_dice, oracle_nsd, random_mask, rng};
use lkm_train::metrics::{boundary, dice_score, foreground_scores, nsd_score};
use lkm_train::TrainError;
use proptest::prelude::*;

fn square(h: usize, w: usize, y0: usize, x0: usize, side: usize) -> Vec<u8> {
    let mut m = vec![0u8; h * w];
    for y in y0..y0 + side {
        for x in x0..x0 + side {
            m[y * w + x] = 1;
        }
    }
    m
}

#[test]
fn dice_examples() {
    let a = square(8, 8, 2, 2, 3);
    assert_eq!(dice_score(&a, &a, 1).unwrap(), 1.0);
    assert_eq!(dice_score(&square(8, 8, 0, 0, 2), &square(8, 8, 5, 5, 2), 1).unwrap(), 0.0);
    // |P| = |G| = 4 with two shared pixels.
    let p = [1, 1, 1, 1, 0, 0];
    let g = [0, 0, 1, 1, 1, 1];
    assert_eq!(dice_score(&p, &g, 1).unwrap(), 2.0 * 2.0 / (4.0 + 4.0));
    assert_eq!(dice_score(&[0, 0], &[0, 0], 3).unwrap(), 1.0);
    assert!(matches!(dice_score(&[0, 1], &[0], 1), Err(TrainError::Shape(_))));
}

#[test]
fn nsd_identical_is_one() {
    let m = square(8, 8, 1, 2, 4);
    for tau in [0.0, 0.5, 1.0, 3.0] {
        assert_eq!(nsd_score(&m, &m, &[8, 8], 1, tau).unwrap(), 1.0);
    }
}

#[test]
fn nsd_of_shifted_square() {
    let gt = square(8, 8, 2, 2, 4);
    let pred = square(8, 8, 2, 3, 4);
    assert_eq!(nsd_score(&pred, &gt, &[8, 8], 1, 1.0).unwrap(), 1.0);
    let exact = nsd_score(&pred, &gt, &[8, 8], 1, 0.0).unwrap();
    // Each 4×4 square has 12 boundary pixels; after a one-column shift the
    // top and bottom rows share 3 pixels each: (6 + 6) / (12 + 12).
    let bp = oracle_boundary(&pred, 8, 8, 1);
    let bg = oracle_boundary(&gt, 8, 8, 1);
    let shared = bp.iter().filter(|p| bg.contains(p)).count();
    assert_eq!((bp.len(), bg.len(), shared), (12, 12, 6));
    assert_eq!(exact, 2.0 * shared as f64 / 24.0);
    assert_eq!(exact, oracle_nsd(&pred, &gt, 8, 8, 1, 0.0));
    assert!(exact < 1.0);
}

#[test]
fn nsd_far_apart_is_zero() {
    let a = square(16, 16, 0, 0, 2);
    let b = square(16, 16, 10, 11, 2);
    assert_eq!(nsd_score(&a, &b, &[16, 16], 1, 1.0).unwrap(), 0.0);
    assert_eq!(oracle_nsd(&a, &b, 16, 16, 1, 1.0), 0.0);
}

#[test]
fn nsd_errors_and_empty() {
    let m = vec![0u8; 16];
    assert_eq!(nsd_score(&m, &m, &[4, 4], 1, 1.0).unwrap(), 1.0);
    assert!(matches!(nsd_score(&m, &m[..8], &[4, 4], 1, 1.0), Err(TrainError::Shape(_))));
    assert!(matches!(nsd_score(&m, &m, &[4, 5], 1, 1.0), Err(TrainError::Shape(_))));
    assert!(nsd_score(&m, &m, &[4, 4], 1, -1.0).is_err());
}

#[test]
fn boundary_of_filled_square_excludes_interior() {
    let m = square(6, 6, 1, 1, 4);
    let b = boundary(&m, &[6, 6], 1);
    assert_eq!(b.len(), 12);
    assert!(!b.contains(&(2 * 6 + 2)) && !b.contains(&(3 * 6 + 3)));
    // Touching the border counts as a label change.
    assert_eq!(boundary(&[1; 9], &[3, 3], 1).len(), 8);
}

#[test]
fn boundary_in_volumes_uses_six_faces() {
    let mut m = vec![0u8; 5 * 5 * 5];
    for z in 1..4 {
        for y in 1..4 {
            for x in 1..4 {
                m[(z * 5 + y) * 5 + x] = 2;
            }
        }
    }
    // A 3×3×3 cube has one interior voxel.
    assert_eq!(boundary(&m, &[5, 5, 5], 2).len(), 26);
}

#[test]
fn hundred_random_pairs_match_oracles() {
    let mut r = rng(7);
    for _ in 0..100 {
        let p = random_mask(&mut r, 16, 16, 4);
        let g = random_mask(&mut r, 16, 16, 4);
        for c in 0..4u8 {
            assert_eq!(dice_score(&p, &g, c).unwrap(), oracle_dice(&p, &g, c));
            for tau in [0.0, 1.0, 1.5, 2.0] {
                let d = (nsd_score(&p, &g, &[16, 16], c, tau).unwrap() - oracle_nsd(&p, &g, 16, 16, c, tau)).abs();
                assert!(d < 1e-12, "class {c} tau {tau}: {d}");
            }
        }
    }
}

#[test]
fn foreground_scores_average_classes() {
    let mut r = rng(8);
    let p = random_mask(&mut r, 16, 16, 4);
    let g = random_mask(&mut r, 16, 16, 4);
    let (d, s) = foreground_scores(&p, &g, &[16, 16], 4, 1.0).unwrap();
    let want_d = (1..4).map(|c| oracle_dice(&p, &g, c)).sum::<f64>() / 3.0;
    let want_s = (1..4).map(|c| oracle_nsd(&p, &g, 16, 16, c, 1.0)).sum::<f64>() / 3.0;
    assert!((d - want_d).abs() < 1e-15 && (s - want_s).abs() < 1e-12);
}

proptest! {
    #[test]
    fn metric_invariants(seed in 0u64..10_000, class in 0u8..3) {
        let mut r = rng(seed);
        let p = random_mask(&mut r, 12, 12, 3);
        let g = random_mask(&mut r, 12, 12, 3);
        let d = dice_score(&p, &g, class).unwrap();
        prop_assert_eq!(d, dice_score(&g, &p, class).unwrap());
        prop_assert!((0.0..=1.0).contains(&d));
        let mut last = 0.0;
        for tau in [0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 20.0] {
            let s = nsd_score(&p, &g, &[12, 12], class, tau).unwrap();
            prop_assert!((0.0..=1.0).contains(&s));
            prop_assert!(s >= last);
            prop_assert_eq!(s, nsd_score(&g, &p, &[12, 12], class, tau).unwrap());
            last = s;
        }
        // Past the grid diagonal every boundary point is matched.
        if p.contains(&class) && g.contains(&class) {
            prop_assert_eq!(last, 1.0);
        }
    }
}

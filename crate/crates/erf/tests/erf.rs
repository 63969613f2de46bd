use lkm_core::lm::{KernelSpec, LmBlock, LmBlockConfig};
use lkm_core::unet::{build_model, ModelConfig};
use lkm_core::ParamStore;
use lkm_erf::pgm::{read_pgm, write_pgm};
use lkm_erf::{compute_erf, compute_erf_averaged, erf_of, export_erf, ErfError, ErfMap, Target};
use lkm_tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SUPPORT: f64 = 1e-6;

fn random(seed: u64, shape: &[usize]) -> Tensor {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::from_vec((0..n).map(|_| r.random_range(-1.0..1.0)).collect(), shape).unwrap()
}

/// Blocks in these tests use 4 channels: a layer norm over 2 channels maps
/// every token to ±1 and has a near-zero Jacobian.
fn block(c: usize, k: usize, pim: bool, pam: bool, bim: bool, seed: u64) -> (LmBlock, ParamStore) {
    let mut cfg = LmBlockConfig::new(c, KernelSpec::cube(k, 2).unwrap());
    cfg.use_pim = pim;
    cfg.use_pam = pam;
    cfg.use_bim = bim;
    cfg.state_dim = 4;
    let b = LmBlock::new("blk", cfg);
    let mut store = ParamStore::new();
    b.init(&mut store, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    (b, store)
}

#[test]
fn unidirectional_pixel_scan_sees_only_its_sub_kernel_prefix() {
    for seed in 0..10 {
        let (b, store) = block(4, 4, true, false, false, seed);
        let x = random(100 + seed, &[4, 8, 8]);
        let layout = b.layout(&x).unwrap();
        for (y, xx) in [(0, 0), (3, 2), (5, 6), (7, 7)] {
            let map = erf_of(|v| b.pim_forward(&store, v), &[x.clone()], &Target::At(vec![y, xx])).unwrap();
            let (gt, jt) = layout.locate(y * 8 + xx);
            for (q, &on) in map.support(SUPPORT).iter().enumerate() {
                let (g, j) = layout.locate(q);
                if on {
                    assert!(g == gt && j <= jt, "seed {seed} target ({y},{xx}) reaches pixel {q}");
                }
            }
            assert!(map.support(SUPPORT)[y * 8 + xx]);
        }
    }
}

#[test]
fn patch_scan_reaches_every_sub_kernel() {
    for seed in 0..10 {
        let (b, store) = block(4, 2, false, true, true, seed);
        let x = random(200 + seed, &[4, 6, 6]);
        let layout = b.layout(&x).unwrap();
        let map = erf_of(|v| b.pam_forward(&store, v), &[x.clone()], &Target::Center).unwrap();
        let mut hit = vec![false; layout.count()];
        for (q, &on) in map.support(SUPPORT).iter().enumerate() {
            hit[layout.locate(q).0] |= on;
        }
        assert!(hit.iter().all(|&h| h), "seed {seed}");
    }
}

#[test]
fn stem_erf_stays_inside_its_window() {
    let cfg = ModelConfig::default();
    let model = build_model(&cfg, 4).unwrap();
    let w = model.params.get("stem.w").unwrap().clone();
    let stem = |x: &Tensor| Ok(x.conv(&w, 2, 1, 1)?);
    let x = random(5, &[1, 64, 64]);
    for (ty, tx) in [(0, 0), (10, 20), (31, 31), (16, 5)] {
        let map = erf_of(stem, &[x.clone()], &Target::At(vec![ty, tx])).unwrap();
        for (q, &on) in map.support(0.0).iter().enumerate() {
            let (y, xx) = ((q / 64) as i64, (q % 64) as i64);
            // Output (ty, tx) reads input rows 2ty−1 ..= 2ty+1 and likewise columns.
            let inside = (y - 2 * ty as i64).abs() <= 1 && (xx - 2 * tx as i64).abs() <= 1;
            assert!(!on || inside, "target ({ty},{tx}) reaches ({y},{xx})");
        }
    }
}

#[test]
fn bidirectional_support_contains_forward_support() {
    for seed in 0..10 {
        // Same store: the forward-only block ignores the reverse parameters.
        let (on, store) = block(4, 4, true, false, true, seed);
        let (off, _) = block(4, 4, true, false, false, seed);
        let x = random(300 + seed, &[4, 8, 8]);
        let layout = on.layout(&x).unwrap();
        for t in [vec![1, 1], vec![4, 6], vec![7, 0]] {
            let target = Target::At(t);
            let a = erf_of(|v| on.pim_forward(&store, v), &[x.clone()], &target).unwrap().support(SUPPORT);
            let b = erf_of(|v| off.pim_forward(&store, v), &[x.clone()], &target).unwrap().support(SUPPORT);
            for g in 0..layout.count() {
                for q in (0..64).filter(|&q| layout.locate(q).0 == g) {
                    assert!(!b[q] || a[q], "seed {seed} sub-kernel {g} pixel {q}");
                }
            }
        }
    }
}

fn toy_inputs() -> Vec<Tensor> {
    (0..16).map(|i| random(1000 + i, &[1, 64, 64])).collect()
}

#[test]
#[ignore = "every variant of the 64x64 toy model saturates the whole image at a 1e-6 threshold; see README"]
fn full_model_erf_exceeds_pixel_scan_ablation() {
    let inputs = toy_inputs();
    let full = build_model(&ModelConfig::default(), 0).unwrap();
    let ablated = build_model(&ModelConfig { use_pim: false, ..ModelConfig::default() }, 0).unwrap();
    let a = compute_erf_averaged(&full, &inputs, &Target::Center).unwrap().support_count(SUPPORT);
    let b = compute_erf_averaged(&ablated, &inputs, &Target::Center).unwrap().support_count(SUPPORT);
    assert!(a > b, "full {a} vs ablated {b}");
}

#[test]
fn toy_model_erf_is_normalized_and_deterministic() {
    let model = build_model(&ModelConfig::default(), 0).unwrap();
    let x = random(9, &[1, 64, 64]);
    let a = compute_erf(&model, &x, &Target::Center).unwrap();
    let b = compute_erf(&model, &x, &Target::Center).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.shape, vec![64, 64]);
    assert!(a.values.iter().all(|&v| (0.0..=1.0).contains(&v)));
    assert_eq!(a.values.iter().copied().fold(0.0, f64::max), 1.0);
}

#[test]
fn targets_parse_and_resolve() {
    assert_eq!("center".parse::<Target>().unwrap().resolve(&[64, 64]).unwrap(), vec![32, 32]);
    assert_eq!("3, 7".parse::<Target>().unwrap(), Target::At(vec![3, 7]));
    assert!(matches!("middle".parse::<Target>(), Err(ErfError::Target(_))));
    assert!(matches!(Target::At(vec![64, 0]).resolve(&[64, 64]), Err(ErfError::Target(_))));
    assert!(matches!(Target::At(vec![1]).resolve(&[64, 64]), Err(ErfError::Target(_))));
    let model = build_model(&ModelConfig::default(), 0).unwrap();
    let err = compute_erf(&model, &random(1, &[1, 64, 64]), &Target::At(vec![5, 99]));
    assert!(matches!(err, Err(ErfError::Target(_))));
}

#[test]
fn export_quantizes_linearly() {
    let dir = tempfile::tempdir().unwrap();
    let zero = ErfMap { shape: vec![2, 3], values: vec![0.0; 6] };
    export_erf(&zero, &dir.path().join("z.pgm")).unwrap();
    assert_eq!(read_pgm(&dir.path().join("z.pgm")).unwrap(), (3, 2, vec![0; 6]));

    let map = ErfMap { shape: vec![2, 3], values: vec![0.0, 0.25, 0.5, 0.1, 1.0, 0.002] };
    let path = dir.path().join("m.pgm");
    export_erf(&map, &path).unwrap();
    let (w, h, px) = read_pgm(&path).unwrap();
    assert_eq!((w, h), (3, 2));
    assert_eq!(px, map.quantized());
    assert_eq!(px, vec![0, 64, 128, 26, 255, 1]);
}

#[test]
fn volumes_export_their_middle_slice() {
    let dir = tempfile::tempdir().unwrap();
    let mut values = vec![0.0; 3 * 2 * 2];
    values[4..8].copy_from_slice(&[1.0, 0.5, 0.0, 1.0]);
    let path = dir.path().join("v.pgm");
    export_erf(&ErfMap { shape: vec![3, 2, 2], values }, &path).unwrap();
    assert_eq!(read_pgm(&path).unwrap(), (2, 2, vec![255, 128, 0, 255]));
}

#[test]
fn io_and_format_errors() {
    let dir = tempfile::tempdir().unwrap();
    let map = ErfMap { shape: vec![1, 1], values: vec![1.0] };
    assert!(matches!(export_erf(&map, &dir.path().join("missing").join("x.pgm")), Err(ErfError::Io(_))));
    assert!(matches!(write_pgm(&dir.path().join("y.pgm"), 2, 2, &[0; 3]), Err(ErfError::Format(_))));
    std::fs::write(dir.path().join("bad.pgm"), b"P2\n1 1\n255\n0").unwrap();
    assert!(read_pgm(&dir.path().join("bad.pgm")).is_err());
}

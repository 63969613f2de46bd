mod common;

use std::path::Path;
use std::process::Command;

use common::tiny_config;
use lkm_erf::pgm::read_pgm;

fn lkmseg(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_lkmseg")).args(args).env("LKMSEG_THREADS", "1").output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = lkmseg(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn write_config(dir: &Path) -> String {
    let path = dir.join("tiny.cfg");
    std::fs::write(&path, tiny_config().canonical()).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn train_eval_and_erf_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let run = dir.path().join("run");
    let run_s = run.to_str().unwrap();
    ok(&["train", "--config", &cfg, "--epochs", "1", "--seed", "3", "--out", run_s, "--no-pam"]);
    let csv = std::fs::read_to_string(run.join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.lines().nth(1).unwrap().ends_with(&format!(",3,{}", {
        let mut c = tiny_config();
        c.model.use_pam = false;
        c.hash()
    })));

    let stdout = ok(&["eval", "--out", run_s]);
    assert!(stdout.contains("DSC"));
    let (w, h, px) = read_pgm(&run.join("eval").join("pred_000.pgm")).unwrap();
    assert_eq!((w, h), (32, 32));
    // Four classes scale by floor(255 / 3) = 85.
    assert!(px.iter().all(|v| v % 85 == 0));

    let erf = dir.path().join("erf.pgm");
    let ckpt = run.join("best.ckpt");
    ok(&["erf", "--checkpoint", ckpt.to_str().unwrap(), "--target", "3,4", "--average", "2", "--out", erf.to_str().unwrap()]);
    let (_, _, map) = read_pgm(&erf).unwrap();
    assert_eq!(map.iter().copied().max(), Some(255));

    let bad = lkmseg(&["erf", "--checkpoint", ckpt.to_str().unwrap(), "--target", "40,1"]);
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("target"));
}

#[test]
fn gen_data_writes_images_and_scaled_masks() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = dir.path().join("data");
    ok(&["gen-data", "--config", &cfg, "--count", "2", "--out", out.to_str().unwrap()]);
    let (_, _, mask) = read_pgm(&out.join("mask_001.pgm")).unwrap();
    assert!(mask.iter().all(|v| [0, 85, 170, 255].contains(v)));
    assert!(read_pgm(&out.join("image_000.pgm")).is_ok());
}

#[test]
fn bad_inputs_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.cfg");
    std::fs::write(&path, "seed = 1\nwarmup = 5\n").unwrap();
    let out = lkmseg(&["train", "--config", path.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown key"));
    assert!(!lkmseg(&["train", "--precision", "f16"]).status.success());
    assert!(!lkmseg(&["frobnicate"]).status.success());
}

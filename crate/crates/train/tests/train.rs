mod common;

use std::fs;

use common::tiny_config;
use lkm_core::unet::{build_model, load_checkpoint};
use lkm_tensor::Precision;
use lkm_train::train::{
    train, train_on, Dataset, RunRecord, BEST_FILE, CSV_HEADER, LAST_FILE, METRICS_FILE, RUN_CONFIG_FILE,
};
use lkm_train::{RunConfig, TrainError};

fn csv(dir: &std::path::Path) -> String {
    fs::read_to_string(dir.join(METRICS_FILE)).unwrap()
}

#[test]
fn zero_epochs_evaluates_the_initial_model() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny_config();
    cfg.optim.epochs = 0;
    let o = train(&cfg, dir.path(), false).unwrap();
    let text = csv(dir.path());
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], CSV_HEADER);
    let row = RunRecord::parse_row(lines[1]).unwrap();
    assert_eq!((row.epoch, row.seconds, row.seed), (0, 0.0, cfg.seed));
    assert_eq!(row.config_hash, cfg.hash());
    assert!((0.0..=1.0).contains(&row.dsc) && (0.0..=1.0).contains(&row.nsd));
    // The untrained weights are exactly the seeded initialization.
    let (m, _) = load_checkpoint(&dir.path().join(BEST_FILE), &cfg.model).unwrap();
    let init = build_model(&cfg.model, cfg.seed).unwrap();
    for (name, t) in init.params.iter() {
        assert_eq!(m.params.get(name).unwrap().to_vec(), t.to_vec(), "{name}");
    }
    assert_eq!(o.records.len(), 1);
    assert_eq!(RunConfig::load(&dir.path().join(RUN_CONFIG_FILE)).unwrap(), cfg);
    assert!(dir.path().join("report.md").exists());
}

#[test]
fn identical_runs_write_identical_csvs() {
    let cfg = tiny_config();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    train(&cfg, a.path(), false).unwrap();
    train(&cfg, b.path(), false).unwrap();
    assert_eq!(csv(a.path()), csv(b.path()));
    assert_eq!(fs::read(a.path().join(LAST_FILE)).unwrap(), fs::read(b.path().join(LAST_FILE)).unwrap());
}

#[test]
fn resumed_run_follows_the_uninterrupted_trajectory() {
    let mut cfg = tiny_config();
    cfg.optim.epochs = 3;
    let data = Dataset::generate(&cfg).unwrap();
    let whole = tempfile::tempdir().unwrap();
    train_on(&cfg, &data, Some(whole.path()), false).unwrap();

    let split = tempfile::tempdir().unwrap();
    let mut first = cfg.clone();
    first.optim.epochs = 1;
    train_on(&first, &data, Some(split.path()), false).unwrap();
    train_on(&cfg, &data, Some(split.path()), true).unwrap();

    assert_eq!(csv(whole.path()), csv(split.path()));
    assert_eq!(fs::read(whole.path().join(LAST_FILE)).unwrap(), fs::read(split.path().join(LAST_FILE)).unwrap());
    assert_eq!(fs::read(whole.path().join(BEST_FILE)).unwrap(), fs::read(split.path().join(BEST_FILE)).unwrap());
}

#[test]
fn resume_rejects_a_different_configuration() {
    let cfg = tiny_config();
    let dir = tempfile::tempdir().unwrap();
    let mut short = cfg.clone();
    short.optim.epochs = 0;
    train(&short, dir.path(), false).unwrap();
    let mut other = cfg.clone();
    other.optim.lr = 0.05;
    assert!(matches!(train(&other, dir.path(), true), Err(TrainError::Config(_))));
}

#[test]
fn divergence_aborts_and_keeps_the_last_good_checkpoint() {
    let mut cfg = tiny_config();
    cfg.optim.lr = f64::MAX;
    cfg.optim.epochs = 3;
    let dir = tempfile::tempdir().unwrap();
    let err = train(&cfg, dir.path(), false).unwrap_err();
    assert!(matches!(err, TrainError::NonFinite(_)), "{err}");
    let (m, _) = load_checkpoint(&dir.path().join(LAST_FILE), &cfg.model).unwrap();
    assert!(m.params.iter().all(|(_, t)| t.data().iter().all(|v| v.is_finite())));
    let rows = csv(dir.path()).lines().count() - 1;
    let (_, opt) = load_checkpoint(&dir.path().join(LAST_FILE), &cfg.model).unwrap();
    assert_eq!(opt.get("train.epoch").unwrap().item() as usize + 1, rows);
}

#[test]
fn training_reduces_the_loss() {
    let mut cfg = tiny_config();
    cfg.train_count = 16;
    cfg.optim.epochs = 4;
    let o = train_on(&cfg, &Dataset::generate(&cfg).unwrap(), None, false).unwrap();
    assert!(o.records[4].loss < o.records[1].loss, "{:?}", o.records);
    assert_eq!(o.best.dsc, o.records.iter().map(|r| r.dsc).fold(f64::MIN, f64::max));
}

#[test]
fn single_precision_keeps_parameters_representable() {
    let mut cfg = tiny_config();
    cfg.precision = Precision::F32;
    cfg.optim.epochs = 1;
    let o = train_on(&cfg, &Dataset::generate(&cfg).unwrap(), None, false).unwrap();
    for (_, t) in o.model.params.iter() {
        assert_eq!(t.precision(), Precision::F32);
        assert!(t.data().iter().all(|&v| v as f32 as f64 == v));
    }
    assert!(o.last().loss.is_finite());
}

#[test]
fn checkpoint_round_trip_reproduces_forward_bits() {
    let cfg = tiny_config();
    let dir = tempfile::tempdir().unwrap();
    let o = train(&cfg, dir.path(), false).unwrap();
    let (m, _) = load_checkpoint(&dir.path().join(LAST_FILE), &cfg.model).unwrap();
    let x = &Dataset::generate(&cfg).unwrap().val[0].image;
    let (a, b) = (o.model.forward(x).unwrap(), m.forward(x).unwrap());
    assert!(a.data().iter().zip(b.data()).all(|(p, q)| p.to_bits() == q.to_bits()));
}

use mvalign_core::harness::{
    cmd_eval, cmd_eval_identity, cmd_render, cmd_train, DepthSource, EvalRow, ExperimentConfig, HarnessError, RunRecord,
    Variant,
};

fn small() -> ExperimentConfig {
    ExperimentConfig {
        resolution: 32,
        n_scenes: 2,
        eval_scenes: 1,
        val_scenes: 1,
        epochs: 2,
        levels: 3,
        n_p: vec![7, 7, 2],
        ..ExperimentConfig::default()
    }
}

#[test]
fn default_training_loss_strictly_decreases_over_five_epochs() {
    let cfg = ExperimentConfig::default();
    assert_eq!((cfg.variant, cfg.n_scenes, cfg.epochs), (Variant::Ours, 8, 5));
    let dir = tempfile::tempdir().unwrap();
    cmd_render(&cfg, &dir.path().join("data")).unwrap();
    let record = cmd_train(&cfg, &dir.path().join("data"), &dir.path().join("run")).unwrap();
    let losses: Vec<f64> = record.epochs.iter().map(|e| e.train_loss).collect();
    assert_eq!(losses.len(), 5);
    assert!(losses.windows(2).all(|w| w[1] < w[0]), "{losses:?}");
}

#[test]
fn run_record_embeds_config_and_seeds() {
    let cfg = small();
    let dir = tempfile::tempdir().unwrap();
    cmd_render(&cfg, &dir.path().join("data")).unwrap();
    cmd_train(&cfg, &dir.path().join("data"), &dir.path().join("run")).unwrap();
    let text = std::fs::read_to_string(dir.path().join("run/run_record.json")).unwrap();
    let record: RunRecord = serde_json::from_str(&text).unwrap();
    assert_eq!(record.config, cfg);
    assert_eq!((record.dataset_seed, record.train_seed, record.init_seed), (7, 11, 3));
    assert_eq!(record.epochs.len(), 2);
    assert!(record.diverged.is_none());
}

#[test]
fn eval_csv_has_contract_columns_and_one_row_per_view() {
    let cfg = small().with_variant(Variant::NoEpi);
    let dir = tempfile::tempdir().unwrap();
    cmd_render(&cfg, &dir.path().join("data")).unwrap();
    cmd_train(&cfg, &dir.path().join("data"), &dir.path().join("run")).unwrap();
    let report = cmd_eval(&cfg, &dir.path().join("run"), DepthSource::Gt, &dir.path().join("eval")).unwrap();
    assert_eq!(report.rows.len(), 6);
    let mut reader = csv::Reader::from_path(dir.path().join("eval/eval.csv")).unwrap();
    let header: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, ["variant", "scene", "view", "psnr", "ssim", "corr_count", "kv_floats"]);
    let rows: Vec<EvalRow> = reader.deserialize().map(Result::unwrap).collect();
    assert!(rows.iter().all(|r| r.variant == "no_epi" && r.kv_floats == 0));
}

#[test]
fn identity_eval_scores_perfect_ssim() {
    let dir = tempfile::tempdir().unwrap();
    let report = cmd_eval_identity(&small(), dir.path()).unwrap();
    assert!(report.rows.iter().all(|r| r.ssim == 1.0 && r.psnr == f64::INFINITY));
}

#[test]
fn missing_inputs_are_reported() {
    let cfg = small();
    let dir = tempfile::tempdir().unwrap();
    let err = cmd_eval(&cfg, &dir.path().join("nope"), DepthSource::Gt, &dir.path().join("eval")).unwrap_err();
    assert!(matches!(err, HarnessError::Io { .. }), "{err}");
    assert!(cmd_train(&cfg, &dir.path().join("nope"), &dir.path().join("run")).is_err());
}

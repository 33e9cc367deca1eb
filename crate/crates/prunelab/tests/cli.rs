//! Command-line contract: exit codes, artifact layout, error lines.

use std::path::Path;

use prunelab::cli::main_with_args;

fn tiny_config_json(pipeline: &str) -> String {
    format!(
        r#"{{
  "pipeline": "{pipeline}",
  "network": {{ "input_dim": 784, "layer_widths": [16, 10], "init": "he-normal" }},
  "dataset": {{ "kind": "digits", "train": 200, "test": 80, "noise_sd": 0.35, "seed": 7777, "max_shift": 4 }},
  "optimizer": {{ "learning_rate": 0.1, "momentum": 0.9, "weight_decay": 0.0005, "batch_size": 64, "schedule": [] }},
  "prune": {{ "ratio": 0.5, "scope": "global", "rule": "magnitude", "prune_epoch": 1 }},
  "distill": {{ "temperature": 4.0, "alpha": 0.9 }},
  "seeds": [1],
  "epochs_teacher": 2,
  "epochs_student": 2
}}"#
    )
}

fn run(args: &[&str]) -> i32 {
    main_with_args(std::iter::once("prunelab").chain(args.iter().copied()))
}

#[test]
fn missing_config_file_fails_without_partial_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("should-not-exist");
    let code = run(&[
        "run",
        "--config",
        "/nonexistent/config.json",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_ne!(code, 0);
    assert!(!out.exists(), "no partial outputs on config failure");
}

#[test]
fn invalid_config_is_rejected_before_compute() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"pipeline\": \"wilton\"}").unwrap();
    let out = dir.path().join("out");
    let code = run(&["run", "--config", bad.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_ne!(code, 0);
    assert!(!out.exists());
}

#[test]
fn unknown_subcommand_fails() {
    assert_ne!(run(&["frobnicate"]), 0);
}

#[test]
fn unknown_preset_fails() {
    assert_ne!(run(&["run", "--preset", "no-such-preset"]), 0);
}

#[test]
fn run_emits_csv_and_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, tiny_config_json("wilton")).unwrap();
    let out = dir.path().join("runs");
    let code = run(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!(out.join("metrics.csv").exists());
    assert!(out.join("summary.csv").exists());
    assert!(out.join("checkpoints/teacher-s1-final.wltn").exists());
    assert!(out.join("checkpoints/teacher-s1-ep1.wltn").exists());
    assert!(out.join("checkpoints/student-wilton-s1.wltn").exists());
    let metrics = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("run_id,pipeline,seed,phase,epoch,"));
    // 2 teacher + 2 student epochs, one row each, plus the header.
    assert_eq!(metrics.lines().count(), 5);
}

#[test]
fn seed_flag_overrides_seed_list() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, tiny_config_json("vanilla-mbp")).unwrap();
    let out = dir.path().join("runs");
    let code = run(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "9",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    assert!(out.join("checkpoints/teacher-s9-final.wltn").exists());
    assert!(!out.join("checkpoints/teacher-s1-final.wltn").exists());
}

#[test]
fn prune_subcommand_reports_and_saves() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, tiny_config_json("dense-baseline")).unwrap();
    let out1 = dir.path().join("train-out");
    assert_eq!(
        run(&["train", "--config", cfg.to_str().unwrap(), "--out", out1.to_str().unwrap()]),
        0
    );
    let ckpt = out1.join("checkpoints/teacher-s1-final.wltn");
    assert!(ckpt.exists());

    // Point the config's checkpoint field at the trained artifact.
    let mut v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&cfg).unwrap()).unwrap();
    v["checkpoint"] = serde_json::json!(ckpt.to_str().unwrap());
    std::fs::write(&cfg, v.to_string()).unwrap();

    let out2 = dir.path().join("prune-out");
    assert_eq!(
        run(&["prune", "--config", cfg.to_str().unwrap(), "--out", out2.to_str().unwrap()]),
        0
    );
    assert!(out2.join("pruned.wltn").exists());
    let report = std::fs::read_to_string(out2.join("prune_report.csv")).unwrap();
    assert!(report.starts_with("kept_fraction,removed_fraction,"));

    // The pruned checkpoint carries the mask.
    let pruned = prunelab::checkpoint::Checkpoint::load(&out2.join("pruned.wltn")).unwrap();
    assert!(pruned.masks.is_some());

    // Distill from the teacher checkpoint, building the student by pruning.
    let out3 = dir.path().join("distill-out");
    assert_eq!(
        run(&["distill", "--config", cfg.to_str().unwrap(), "--out", out3.to_str().unwrap()]),
        0
    );
    assert!(out3.join("student.wltn").exists());
}

#[test]
fn spectrum_subcommand_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_json = r#"{
  "pipeline": "dense-baseline",
  "network": { "input_dim": 2, "layer_widths": [8, 1], "init": "he-normal" },
  "dataset": {
    "kind": "multifreq",
    "bands": [[1, 1.0, 0.0]],
    "n_samples": 64,
    "noise_sd": 0.0,
    "seed": 11,
    "domain": [0.0, 1.0],
    "lift": true,
    "test_fraction": 0.25
  },
  "optimizer": { "learning_rate": 0.03, "momentum": 0.9, "weight_decay": 0.0, "batch_size": 64, "schedule": [] },
  "seeds": [1],
  "epochs_teacher": 2,
  "epochs_student": 0,
  "spectral_probe": { "grid": { "lo": 0.0, "hi": 1.0, "n": 64 }, "bands": [1], "delta": 0.1 }
}"#;
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, cfg_json).unwrap();
    let out1 = dir.path().join("train-out");
    assert_eq!(
        run(&["run", "--config", cfg.to_str().unwrap(), "--out", out1.to_str().unwrap()]),
        0
    );
    let ckpt = out1.join("checkpoints/teacher-s1-final.wltn");

    let mut v: serde_json::Value = serde_json::from_str(cfg_json).unwrap();
    v["checkpoint"] = serde_json::json!(ckpt.to_str().unwrap());
    std::fs::write(&cfg, v.to_string()).unwrap();
    let out2 = dir.path().join("spectrum-out");
    assert_eq!(
        run(&["spectrum", "--config", cfg.to_str().unwrap(), "--out", out2.to_str().unwrap()]),
        0
    );
    let csv = std::fs::read_to_string(out2.join("spectrum.csv")).unwrap();
    assert!(csv.starts_with("k,re,im,magnitude\n"));
    assert_eq!(csv.lines().count(), 1 + 33); // header + bins 0..=32
}

#[test]
fn metrics_csv_has_probe_band_columns_when_probe_active() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_json = r#"{
  "pipeline": "dense-baseline",
  "network": { "input_dim": 2, "layer_widths": [8, 1], "init": "he-normal" },
  "dataset": {
    "kind": "multifreq",
    "bands": [[1, 1.0, 0.0], [3, 1.0, 0.0]],
    "n_samples": 64,
    "noise_sd": 0.0,
    "seed": 11,
    "domain": [0.0, 1.0],
    "lift": true,
    "test_fraction": 0.25
  },
  "optimizer": { "learning_rate": 0.03, "momentum": 0.9, "weight_decay": 0.0, "batch_size": 64, "schedule": [] },
  "seeds": [1],
  "epochs_teacher": 2,
  "epochs_student": 0,
  "spectral_probe": { "grid": { "lo": 0.0, "hi": 1.0, "n": 64 }, "bands": [1, 3], "delta": 0.1 }
}"#;
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, cfg_json).unwrap();
    let out = dir.path().join("out");
    assert_eq!(
        run(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]),
        0
    );
    let metrics = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    let header = metrics.lines().next().unwrap();
    assert!(header.ends_with("band_err_k1,band_err_k3"), "{header}");
}

#[test]
fn dump_dataset_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&tiny_config_json("dense-baseline")).unwrap();
    v["dump_dataset"] = serde_json::json!(true);
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, v.to_string()).unwrap();
    let out = dir.path().join("out");
    assert_eq!(
        run(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]),
        0
    );
    let train_csv = std::fs::read_to_string(out.join("dataset-train.csv")).unwrap();
    assert!(train_csv.starts_with("p0,"));
    assert!(train_csv.lines().next().unwrap().ends_with(",label"));
}

#[test]
fn presets_are_loadable_by_name() {
    // Config errors (not preset-resolution errors) must not occur.
    for (name, _) in prunelab::config::PRESETS {
        assert!(
            prunelab::config::preset(name).is_ok(),
            "preset {name} should load"
        );
    }
    assert!(!Path::new("/nonexistent").exists());
}

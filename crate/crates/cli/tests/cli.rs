//! End-to-end CLI contract tests on a miniature configuration.

use std::path::Path;
use std::process::Command;

fn stswin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_stswin"))
}

fn tiny_config(dir: &Path) -> std::path::PathBuf {
    let cfg = serde_json::json!({
        "seed": 5,
        "model": {
            "height": 16, "width": 16, "stride": 4, "channels": 8, "clip_len": 2,
            "window": 2, "num_heads": 2, "mlp_ratio": 2.0, "use_relative_position_bias": true,
            "d_tr": 16, "d_cl": 4, "num_classes": 4, "aspp_rates": [1], "seg_hidden": 4,
            "ignore_id": 255
        },
        "synth": {
            "num_videos": 4, "frames_per_video": 6, "height": 16, "width": 16,
            "num_classes": 4, "train_videos": 2, "val_videos": 1, "test_videos": 1,
            "speed": [0.3, 0.8], "palette_jitter": 0.1, "noise": 0.15, "seed": 5
        },
        "stage1": {
            "stage": 1, "head": "Segmentation", "objective": "CeOhem",
            "optimizer": "Sgd", "schedule": "Poly", "base_lr": 0.02, "momentum": 0.9,
            "weight_decay": 1e-4, "trust_coefficient": 0.001, "epochs": 2,
            "steps_per_epoch": 1, "batch_size": 2, "clip_len": 2, "keep_fraction": 0.7,
            "ema_momentum": 0.99, "temperature": 1.0,
            "key_spec": {"num_adjacent": 1, "num_cross_video": 1, "include_augmented_self": true},
            "aug": {"enabled": false, "crop": [1.0, 1.0], "scale": [1.0, 1.0], "rotate_deg": 0.0, "out_size": null},
            "val_every": null
        },
        "stage2": {
            "stage": 2, "head": "Projection", "objective": "Contrast",
            "optimizer": "Lars", "schedule": "Cosine", "base_lr": 0.5, "momentum": 0.9,
            "weight_decay": 1e-4, "trust_coefficient": 0.001, "epochs": 2,
            "steps_per_epoch": 1, "batch_size": 2, "clip_len": 2, "keep_fraction": 0.7,
            "ema_momentum": 0.99, "temperature": 1.0,
            "key_spec": {"num_adjacent": 1, "num_cross_video": 1, "include_augmented_self": true},
            "aug": {"enabled": true, "crop": [0.6, 0.95], "scale": [0.9, 1.1], "rotate_deg": 8.0, "out_size": [8, 8]},
            "val_every": null
        },
        "stage3": {
            "stage": 3, "head": "Segmentation", "objective": "CeOhem",
            "optimizer": "Sgd", "schedule": "Poly", "base_lr": 0.01, "momentum": 0.9,
            "weight_decay": 1e-4, "trust_coefficient": 0.001, "epochs": 2,
            "steps_per_epoch": 1, "batch_size": 2, "clip_len": 2, "keep_fraction": 0.7,
            "ema_momentum": 0.99, "temperature": 1.0,
            "key_spec": {"num_adjacent": 1, "num_cross_video": 1, "include_augmented_self": true},
            "aug": {"enabled": false, "crop": [1.0, 1.0], "scale": [1.0, 1.0], "rotate_deg": 0.0, "out_size": null},
            "val_every": null
        }
    });
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

#[test]
fn unknown_flag_exits_2() {
    let out = stswin().arg("--definitely-not-a-flag").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn malformed_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    let out = stswin()
        .args(["synth", "--config"])
        .arg(&bad)
        .arg("--out")
        .arg(dir.path().join("ds"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn unknown_ablation_axis_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = stswin()
        .args(["ablate", "--axis", "nope", "--data"])
        .arg(dir.path())
        .arg("--out")
        .arg(dir.path().join("o"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn later_stage_without_init_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let ds = dir.path().join("ds");
    assert!(stswin().args(["synth", "--config"]).arg(&cfg).arg("--out").arg(&ds).status().unwrap().success());
    let out = stswin()
        .args(["train", "--config"])
        .arg(&cfg)
        .arg("--data")
        .arg(&ds)
        .arg("--out")
        .arg(dir.path().join("run"))
        .args(["--stages", "2,3"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn pipeline_synth_train_eval_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let ds = dir.path().join("ds");
    let run = dir.path().join("run");

    let out = stswin().args(["synth", "--config"]).arg(&cfg).arg("--out").arg(&ds).output().unwrap();
    assert!(out.status.success(), "synth failed: {}", String::from_utf8_lossy(&out.stderr));
    assert!(ds.join("manifest.json").is_file());
    assert!(ds.join("config.json").is_file(), "config must be echoed into the output dir");

    let out = stswin()
        .args(["train", "--config"])
        .arg(&cfg)
        .arg("--data")
        .arg(&ds)
        .arg("--out")
        .arg(&run)
        .output()
        .unwrap();
    assert!(out.status.success(), "train failed: {}", String::from_utf8_lossy(&out.stderr));
    for stage in 1..=3 {
        assert!(run.join(format!("stage{stage}/checkpoint/manifest.json")).is_file());
        assert!(run.join(format!("stage{stage}/log.jsonl")).is_file());
    }

    let eval_dir = dir.path().join("eval");
    let out = stswin()
        .args(["eval", "--checkpoint"])
        .arg(run.join("stage3/checkpoint"))
        .arg("--data")
        .arg(&ds)
        .arg("--out")
        .arg(&eval_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "eval failed: {}", String::from_utf8_lossy(&out.stderr));
    assert!(eval_dir.join("report.json").is_file());
    assert!(eval_dir.join("report.csv").is_file());

    // Reports render charts from the artifacts.
    let charts = dir.path().join("charts");
    std::fs::rename(eval_dir.join("report.json"), run.join("report.json")).unwrap();
    let out = stswin().args(["report", "--run"]).arg(&run).arg("--out").arg(&charts).output().unwrap();
    assert!(out.status.success(), "report failed: {}", String::from_utf8_lossy(&out.stderr));
    assert!(charts.join("training_loss.svg").is_file());
    assert!(charts.join("summary.csv").is_file());
    let svg = std::fs::read_to_string(charts.join("training_loss.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.ends_with("</svg>"));
}

#[test]
fn split_training_is_bitwise_equal_to_combined() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let ds = dir.path().join("ds");
    assert!(stswin().args(["synth", "--config"]).arg(&cfg).arg("--out").arg(&ds).status().unwrap().success());

    let combined = dir.path().join("combined");
    assert!(stswin()
        .args(["train", "--config"]).arg(&cfg)
        .arg("--data").arg(&ds)
        .arg("--out").arg(&combined)
        .status().unwrap().success());

    let split = dir.path().join("split");
    assert!(stswin()
        .args(["train", "--config"]).arg(&cfg)
        .arg("--data").arg(&ds)
        .arg("--out").arg(&split)
        .args(["--stages", "1"])
        .status().unwrap().success());
    assert!(stswin()
        .args(["train", "--config"]).arg(&cfg)
        .arg("--data").arg(&ds)
        .arg("--out").arg(&split)
        .args(["--stages", "2,3", "--init"])
        .arg(split.join("stage1/checkpoint"))
        .status().unwrap().success());

    for stage in 1..=3 {
        let a = combined.join(format!("stage{stage}/checkpoint"));
        let b = split.join(format!("stage{stage}/checkpoint"));
        let mut files: Vec<String> = std::fs::read_dir(&a)
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        files.sort();
        assert!(!files.is_empty());
        for f in files {
            let x = std::fs::read(a.join(&f)).unwrap();
            let y = std::fs::read(b.join(&f)).unwrap();
            assert_eq!(x, y, "stage {stage} file {f} differs between split and combined runs");
        }
    }
}

#[test]
fn ablate_clip_length_emits_five_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let ds = dir.path().join("ds");
    assert!(stswin().args(["synth", "--config"]).arg(&cfg).arg("--out").arg(&ds).status().unwrap().success());
    let out = dir.path().join("ablate");
    let st = stswin()
        .args(["ablate", "--axis", "clip-length", "--config"])
        .arg(&cfg)
        .arg("--data")
        .arg(&ds)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    let csv = std::fs::read_to_string(out.join("ablation.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 6, "header + 5 clip lengths: {csv}");
    assert!(lines[0].starts_with("clip_length,"));
    for (i, n) in (1..=5).enumerate() {
        assert!(lines[i + 1].starts_with(&format!("{n},")));
    }
    // Every non-reference row carries a p-value.
    let with_p = lines[1..].iter().filter(|l| !l.trim_end_matches(',').ends_with(',')).count();
    assert!(with_p >= 4, "expected p-values on non-reference rows: {csv}");
}

#[test]
fn ablate_pairs_emits_seven_rows() {
    let dir = tempfile::tempdir().unwrap();
    // The (1,4) configuration needs four other videos in the train split.
    let cfg = dir.path().join("pairs.json");
    {
        let text = std::fs::read_to_string(tiny_config(dir.path())).unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["synth"]["num_videos"] = 7.into();
        v["synth"]["train_videos"] = 5.into();
        v["synth"]["val_videos"] = 1.into();
        v["synth"]["test_videos"] = 1.into();
        std::fs::write(&cfg, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    }
    let ds = dir.path().join("ds");
    assert!(stswin().args(["synth", "--config"]).arg(&cfg).arg("--out").arg(&ds).status().unwrap().success());
    let out = dir.path().join("ablate");
    let st = stswin()
        .args(["ablate", "--axis", "pairs", "--config"])
        .arg(&cfg)
        .arg("--data")
        .arg(&ds)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    let csv = std::fs::read_to_string(out.join("ablation.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 8, "header + 7 pair configs: {csv}");
    for (i, expect) in ["(0,0)", "(1,0)", "(1,1)", "(1,2)", "(1,3)", "(1,4)", "(2,3)"].iter().enumerate() {
        assert!(lines[i + 1].starts_with(&format!("\"{expect}\"")) || lines[i + 1].starts_with(expect));
    }
}

#[test]
fn stage2_sweep_reports_candidates_and_picks_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let ds = dir.path().join("ds");
    assert!(stswin().args(["synth", "--config"]).arg(&cfg).arg("--out").arg(&ds).status().unwrap().success());
    let run = dir.path().join("run");
    assert!(stswin()
        .args(["train", "--config"]).arg(&cfg)
        .arg("--data").arg(&ds)
        .arg("--out").arg(&run)
        .args(["--stages", "1"])
        .status().unwrap().success());
    let out = stswin()
        .args(["train", "--config"]).arg(&cfg)
        .arg("--data").arg(&ds)
        .arg("--out").arg(&run)
        .args(["--stages", "2", "--init"])
        .arg(run.join("stage1/checkpoint"))
        .args(["--stage2-sweep", "1,2"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let sweep = std::fs::read_to_string(run.join("stage2_sweep/sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 3, "header + 2 candidates: {sweep}");
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("sweep winner"));
    assert!(run.join("stage2/checkpoint/manifest.json").is_file());
}

#[test]
fn verify_passes_on_a_fresh_build() {
    let out = stswin().args(["verify", "--quick"]).output().unwrap();
    assert!(out.status.success(), "verify failed: {}", String::from_utf8_lossy(&out.stdout));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.lines().filter(|l| l.starts_with("PASS")).count() >= 10);
    assert!(!text.contains("\nFAIL"));
}

#[test]
fn env_seed_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    // Same config, two different STSWIN_SEED values: datasets must differ.
    for (out, seed) in [(&a, "1"), (&b, "2")] {
        let st = stswin()
            .args(["synth", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(out)
            .env("STSWIN_SEED", seed)
            .status()
            .unwrap();
        assert!(st.success());
    }
    let fa = std::fs::read(a.join("v00/f0000.ppm")).unwrap();
    let fb = std::fs::read(b.join("v00/f0000.ppm")).unwrap();
    assert_ne!(fa, fb, "STSWIN_SEED must override the config seed");
}

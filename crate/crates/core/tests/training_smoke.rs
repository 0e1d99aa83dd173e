//! Short end-to-end training runs: cross entropy must fall below the
//! uniform-logit value, and every objective variant must run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use stswin_core::data::{generate_synthetic, Dataset, SynthConfig};
use stswin_core::segnet::{Model, ModelConfig};
use stswin_core::train::{run_stage, AugProfile, Objective, StagePlan};

fn setup() -> (tempfile::TempDir, Dataset, ModelConfig) {
    let synth = SynthConfig {
        num_videos: 4,
        frames_per_video: 10,
        height: 16,
        width: 16,
        num_classes: 4,
        train_videos: 3,
        val_videos: 0,
        test_videos: 1,
        speed: (0.2, 0.6),
        palette_jitter: 0.1,
        noise: 0.15,
        seed: 31,
    };
    let dir = tempfile::tempdir().unwrap();
    generate_synthetic(&synth, dir.path()).unwrap();
    let ds = Dataset::load(dir.path()).unwrap();
    let cfg = ModelConfig {
        height: 16,
        width: 16,
        stride: 4,
        channels: 8,
        clip_len: 2,
        num_heads: 2,
        d_tr: 16,
        d_cl: 4,
        num_classes: 4,
        aspp_rates: vec![1],
        seg_hidden: 4,
        ..ModelConfig::default()
    };
    (dir, ds, cfg)
}

#[test]
fn thirty_epochs_beat_uniform_logits() {
    let (dir, ds, cfg) = setup();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let model = Model::new(&cfg, &mut rng);
    let plan = StagePlan {
        epochs: 30,
        steps_per_epoch: 1,
        batch_size: 2,
        clip_len: 2,
        base_lr: 0.03,
        ..StagePlan::stage1(30)
    };
    let res = run_stage(&model, &plan, &ds, 31, &dir.path().join("run")).unwrap();
    let uniform = (cfg.num_classes as f64).ln();
    let final_loss = res.logs.last().unwrap().loss;
    assert!(
        final_loss < uniform,
        "training CE should fall below ln|C| = {uniform:.4}, got {final_loss:.4}"
    );
    // The very first epoch starts near the uniform value thanks to the
    // near-uniform classifier initialisation.
    assert!(res.logs[0].loss < uniform + 0.5);
}

#[test]
fn joint_objective_trains_and_logs_finite_losses() {
    let (dir, ds, cfg) = setup();
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let model = Model::new(&cfg, &mut rng);
    let plan = StagePlan {
        objective: Objective::Joint,
        epochs: 2,
        steps_per_epoch: 1,
        batch_size: 2,
        clip_len: 2,
        base_lr: 0.01,
        key_spec: stswin_core::contrast::KeySourceSpec::pair_config(1, 1),
        aug: AugProfile::identity(),
        ..StagePlan::stage1(2)
    };
    let res = run_stage(&model, &plan, &ds, 32, &dir.path().join("joint")).unwrap();
    assert_eq!(res.logs.len(), 2);
    assert!(res.logs.iter().all(|l| l.loss.is_finite()));
}

#[test]
fn validation_miou_appears_in_logs_when_requested() {
    let (dir, ds, cfg) = setup();
    // Move one video into the validation split by regenerating with a val
    // video; simpler: reuse dataset and point val at train's video by
    // rewriting the manifest.
    let manifest_path = dir.path().join("manifest.json");
    let mut manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&manifest_path).unwrap()).unwrap();
    manifest["splits"]["val"] = serde_json::json!(["v03"]);
    std::fs::write(&manifest_path, serde_json::to_string_pretty(&manifest).unwrap()).unwrap();
    let ds = Dataset::load(ds.root()).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let model = Model::new(&cfg, &mut rng);
    let plan = StagePlan {
        epochs: 2,
        steps_per_epoch: 1,
        batch_size: 2,
        clip_len: 2,
        val_every: Some(2),
        ..StagePlan::stage1(2)
    };
    let res = run_stage(&model, &plan, &ds, 33, &dir.path().join("val")).unwrap();
    assert!(res.logs[0].val_miou.is_none());
    assert!(res.logs[1].val_miou.is_some());
}

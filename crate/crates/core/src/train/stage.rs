//! The stage runner: batches of clips from distinct videos, one optimizer,
//! per-epoch JSON logs, and a tagged checkpoint at the end.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{augment_clip, ce_ohem_loss, lr_schedule, Objective, Optimizer, StagePlan, TrainError};
use crate::contrast::{assemble_key_batch, contrast_step, MomentumEncoder};
use crate::data::{sample_batch, Dataset, Split};
use crate::segnet::{save_checkpoint, Model};
use crate::tensor::no_grad;

/// Deterministic per-(seed, stage, lane) stream so that running stages
/// separately reproduces a combined run bit for bit.
pub fn stage_rng(seed: u64, stage: u8, lane: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((stage as u64) << 32) | lane as u64);
    rng
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EpochLog {
    pub stage: u8,
    pub epoch: usize,
    pub loss: f64,
    pub lr: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val_miou: Option<f64>,
}

pub struct StageResult {
    pub checkpoint_dir: PathBuf,
    pub logs: Vec<EpochLog>,
}

/// Train `model` in place according to the plan. Writes `log.jsonl` and a
/// checkpoint directory under `out_dir` and returns both.
pub fn run_stage(
    model: &Model,
    plan: &StagePlan,
    ds: &Dataset,
    seed: u64,
    out_dir: &Path,
) -> Result<StageResult, TrainError> {
    plan.validate()?;
    std::fs::create_dir_all(out_dir)
        .map_err(|e| TrainError::Io { path: out_dir.display().to_string(), source: e })?;
    let mut data_rng = stage_rng(seed, plan.stage, 0);
    let mut aug_rng = stage_rng(seed, plan.stage, 1);
    let mut key_rng = stage_rng(seed, plan.stage, 2);

    let train_videos = ds.videos(Split::Train).len();
    if train_videos == 0 {
        return Err(TrainError::Plan("training split is empty".into()));
    }
    let batch_size = plan.batch_size.min(train_videos);
    let steps_per_epoch = if plan.steps_per_epoch > 0 {
        plan.steps_per_epoch
    } else {
        train_videos.div_ceil(batch_size)
    };
    let total_steps = (plan.epochs * steps_per_epoch).max(1);

    let params = model.named_params();
    let mut opt = Optimizer::new(plan.optimizer, &params, plan.momentum, plan.weight_decay, plan.trust_coefficient);
    let needs_momentum_branch = matches!(plan.objective, Objective::Contrast | Objective::Joint);
    let momentum_enc = needs_momentum_branch.then(|| MomentumEncoder::new(model, plan.ema_momentum));

    let ignore = ds.ignore_id();
    let mut logs = Vec::with_capacity(plan.epochs);
    let log_path = out_dir.join("log.jsonl");
    let mut log_file = std::fs::File::create(&log_path)
        .map_err(|e| TrainError::Io { path: log_path.display().to_string(), source: e })?;

    let mut global_step = 0usize;
    for epoch in 0..plan.epochs {
        let mut epoch_loss = 0.0;
        let mut lr = plan.base_lr;
        for _ in 0..steps_per_epoch {
            lr = lr_schedule(plan.schedule, plan.base_lr, global_step, total_steps);
            let batch = sample_batch(ds, Split::Train, plan.clip_len, batch_size, &mut data_rng)?;
            model.zero_grads();
            let scale = 1.0 / batch.len() as f64;
            let mut batch_loss = 0.0;
            for clip in &batch {
                let aug = augment_clip(clip, &plan.aug, ignore, &mut aug_rng);
                let loss = match plan.objective {
                    Objective::CeOhem => {
                        let logits = model.seg_logits_last(&aug.frames);
                        ce_ohem_loss(&logits, aug.last_labels(), plan.keep_fraction, ignore).value
                    }
                    Objective::Contrast => {
                        let keys = assemble_key_batch(clip, ds, Split::Train, &plan.key_spec, &plan.aug, &mut key_rng)?;
                        contrast_step(model, momentum_enc.as_ref().unwrap(), &aug, &keys, plan.temperature)
                            .loss
                            .value
                    }
                    Objective::Joint => {
                        let logits = model.seg_logits_last(&aug.frames);
                        let ce = ce_ohem_loss(&logits, aug.last_labels(), plan.keep_fraction, ignore).value;
                        let keys = assemble_key_batch(clip, ds, Split::Train, &plan.key_spec, &plan.aug, &mut key_rng)?;
                        let cl = contrast_step(model, momentum_enc.as_ref().unwrap(), &aug, &keys, plan.temperature)
                            .loss
                            .value;
                        ce.add(&cl)
                    }
                };
                batch_loss += loss.item();
                loss.mul_scalar(scale).backward();
            }
            opt.step(&params, lr);
            model.zero_grads();
            if let Some(enc) = &momentum_enc {
                enc.ema_update(model);
            }
            epoch_loss += batch_loss * scale;
            global_step += 1;
        }
        let val_miou = match plan.val_every {
            Some(k) if k > 0 && (epoch + 1) % k == 0 && !ds.videos(Split::Val).is_empty() => {
                let report = no_grad(|| super::evaluate_split(model, ds, Split::Val))?;
                Some(report.overall_miou)
            }
            _ => None,
        };
        let entry = EpochLog {
            stage: plan.stage,
            epoch,
            loss: epoch_loss / steps_per_epoch as f64,
            lr,
            val_miou,
        };
        let line = serde_json::to_string(&entry).expect("log entry serializes");
        writeln!(log_file, "{line}")
            .map_err(|e| TrainError::Io { path: log_path.display().to_string(), source: e })?;
        logs.push(entry);
    }

    let ckpt_dir = out_dir.join("checkpoint");
    let extra = serde_json::json!({
        "plan": plan,
        "seed": seed,
        "ema_momentum": needs_momentum_branch.then_some(plan.ema_momentum),
        "key_spec": needs_momentum_branch.then_some(plan.key_spec),
        "augmentation_seeds": [seed, plan.stage as u64, 1u64],
    });
    save_checkpoint(&ckpt_dir, model, &format!("stage{}", plan.stage), extra)?;
    Ok(StageResult { checkpoint_dir: ckpt_dir, logs })
}

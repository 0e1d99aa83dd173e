//! Losses, optimizers, augmentation, the three-stage training procedure,
//! and sliding-window inference.
//!
//! Stage 1 trains the trunk with the segmentation head under OHEM cross
//! entropy. Stage 2 swaps in the projection head and optimizes the pixel
//! contrast objective against a momentum branch, initialised from stage 1.
//! Stage 3 restores the segmentation head and fine-tunes with cross entropy
//! from the stage-2 weights.

mod augment;
mod infer;
mod loss;
mod optim;
mod stage;

pub use augment::{augment_clip, augment_frame, AugProfile, Transform};
pub use infer::{evaluate_split, sliding_inference};
pub use loss::{ce_ohem_loss, CeLoss};
pub use optim::{lr_schedule, OptKind, Optimizer, ScheduleKind, POLY_POWER};
pub use stage::{run_stage, stage_rng, EpochLog, StageResult};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contrast::KeySourceSpec;
use crate::data::DataError;
use crate::segnet::CheckpointError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Plan(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Head {
    Segmentation,
    Projection,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Objective {
    CeOhem,
    Contrast,
    /// Ablation: CE and contrast summed in one stage instead of the staged
    /// pre-training.
    Joint,
}

/// Everything one training stage needs; checkpoint manifests echo it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StagePlan {
    pub stage: u8,
    pub head: Head,
    pub objective: Objective,
    pub optimizer: OptKind,
    pub schedule: ScheduleKind,
    pub base_lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// LARS trust coefficient; unused by SGD.
    pub trust_coefficient: f64,
    pub epochs: usize,
    /// 0 derives one batch per training video.
    pub steps_per_epoch: usize,
    pub batch_size: usize,
    pub clip_len: usize,
    /// OHEM keep fraction; 1.0 recovers plain mean CE.
    pub keep_fraction: f64,
    pub ema_momentum: f64,
    pub temperature: f64,
    pub key_spec: KeySourceSpec,
    pub aug: AugProfile,
    /// Evaluate the validation split every k epochs (None: never).
    pub val_every: Option<usize>,
}

impl StagePlan {
    pub fn stage1(epochs: usize) -> StagePlan {
        StagePlan {
            stage: 1,
            head: Head::Segmentation,
            objective: Objective::CeOhem,
            optimizer: OptKind::Sgd,
            schedule: ScheduleKind::Poly,
            base_lr: 0.05,
            momentum: 0.9,
            weight_decay: 1e-4,
            trust_coefficient: 0.001,
            epochs,
            steps_per_epoch: 0,
            batch_size: 4,
            clip_len: 4,
            keep_fraction: 0.7,
            ema_momentum: 0.999,
            temperature: 1.0,
            key_spec: KeySourceSpec::default(),
            aug: AugProfile::standard(),
            val_every: None,
        }
    }

    /// `crop_target` is the aggressive-crop output size (must be divisible
    /// by 2*stride of the model).
    pub fn stage2(epochs: usize, crop_target: (usize, usize)) -> StagePlan {
        StagePlan {
            stage: 2,
            head: Head::Projection,
            objective: Objective::Contrast,
            optimizer: OptKind::Lars,
            schedule: ScheduleKind::Cosine,
            base_lr: 1.0,
            aug: AugProfile::aggressive(crop_target),
            ..StagePlan::stage1(epochs)
        }
    }

    pub fn stage3(epochs: usize) -> StagePlan {
        StagePlan { stage: 3, base_lr: 0.02, ..StagePlan::stage1(epochs) }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let ok = match self.objective {
            Objective::CeOhem => self.head == Head::Segmentation && matches!(self.stage, 1 | 3),
            Objective::Contrast => self.head == Head::Projection && self.stage == 2,
            Objective::Joint => self.head == Head::Segmentation,
        };
        if !ok {
            return Err(TrainError::Plan(format!(
                "stage {} cannot combine head {:?} with objective {:?}",
                self.stage, self.head, self.objective
            )));
        }
        if self.epochs == 0 && self.stage != 1 {
            // Zero-epoch stages are allowed (checkpoint equals init) but only
            // meaningful for tests; no further constraint.
        }
        if !(self.keep_fraction > 0.0 && self.keep_fraction <= 1.0) {
            return Err(TrainError::Plan("keep_fraction must be in (0,1]".into()));
        }
        Ok(())
    }
}

//! The hybrid CNN–Transformer segmentation network.
//!
//! Frames pass through a small convolutional backbone to stride-S tokens,
//! then through space-time shifted-window blocks, a 2x2 feature merging to
//! stride 2S, a second round of blocks, and a multi-scale fusion back to
//! stride S. Two heads share this trunk: a dense classification head and a
//! unit-norm projection head for the contrastive stage.

mod aspp;
mod backbone;
mod checkpoint;
mod heads;
mod merge;

pub use aspp::AsppFuse;
pub use backbone::Backbone;
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointError, CheckpointManifest, ParamEntry};
pub use heads::{ProjHead, SegHead};
pub use merge::FeatureMerging;

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::stswin::{clip_forward, time_shift_schedule, BlockConfig, StswinBlock, TimeShiftSchedule};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub height: usize,
    pub width: usize,
    /// Token stride S of the backbone.
    pub stride: usize,
    /// Token channels C at stride S.
    pub channels: usize,
    /// Clip length N.
    pub clip_len: usize,
    /// Window size M.
    pub window: usize,
    pub num_heads: usize,
    pub mlp_ratio: f64,
    pub use_relative_position_bias: bool,
    /// Fused trunk width D_Tr.
    pub d_tr: usize,
    /// Projection width D_cl.
    pub d_cl: usize,
    pub num_classes: usize,
    pub aspp_rates: Vec<usize>,
    pub seg_hidden: usize,
    pub ignore_id: u8,
}

impl Default for ModelConfig {
    fn default() -> ModelConfig {
        ModelConfig {
            height: 64,
            width: 48,
            stride: 4,
            channels: 32,
            clip_len: 4,
            window: 2,
            num_heads: 4,
            mlp_ratio: 2.0,
            use_relative_position_bias: true,
            d_tr: 64,
            d_cl: 16,
            num_classes: 5,
            aspp_rates: vec![1, 2, 4],
            seg_hidden: 16,
            ignore_id: 255,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) {
        assert!(self.height.is_multiple_of(2 * self.stride) && self.width.is_multiple_of(2 * self.stride),
            "frame {}x{} must be divisible by 2*stride {} for feature merging",
            self.height, self.width, 2 * self.stride);
        assert!(self.channels.is_multiple_of(self.num_heads), "channels not divisible by heads");
        assert!((2 * self.channels).is_multiple_of(self.num_heads), "merged channels not divisible by heads");
        assert!(self.d_cl < self.d_tr, "projection dim must reduce channels (d_cl < d_tr)");
        assert!(self.clip_len >= 1, "clip length must be >= 1");
        assert!(!self.aspp_rates.is_empty(), "need at least one fusion rate");
    }

    pub fn token_grid(&self) -> (usize, usize) {
        (self.height / self.stride, self.width / self.stride)
    }

    fn block_cfg(&self, channels: usize) -> BlockConfig {
        BlockConfig {
            window: self.window,
            num_heads: self.num_heads,
            channels,
            mlp_ratio: self.mlp_ratio,
            use_relative_position_bias: self.use_relative_position_bias,
        }
    }
}

/// Token grid produced by the trunk, with its clip metadata.
pub struct FeatureMap {
    /// [h, w, C] tokens.
    pub tokens: Tensor,
    pub timestep: usize,
    pub video: usize,
}

pub struct Model {
    pub cfg: ModelConfig,
    pub backbone: Backbone,
    pub stage1_blocks: Vec<StswinBlock>,
    pub merge: FeatureMerging,
    pub stage2_blocks: Vec<StswinBlock>,
    pub aspp: AsppFuse,
    pub seg_head: SegHead,
    pub proj_head: ProjHead,
    pub schedule: TimeShiftSchedule,
}

impl Model {
    pub fn new<R: Rng>(cfg: &ModelConfig, rng: &mut R) -> Model {
        cfg.validate();
        let schedule = time_shift_schedule(cfg.clip_len);
        let depth = schedule.len();
        let bc1 = cfg.block_cfg(cfg.channels);
        let bc2 = cfg.block_cfg(2 * cfg.channels);
        let model = Model {
            cfg: cfg.clone(),
            backbone: Backbone::new(cfg.channels, cfg.stride, rng),
            stage1_blocks: (0..depth).map(|_| StswinBlock::new(&bc1, rng)).collect(),
            merge: FeatureMerging::new(cfg.channels, rng),
            stage2_blocks: (0..depth).map(|_| StswinBlock::new(&bc2, rng)).collect(),
            aspp: AsppFuse::new(2 * cfg.channels, cfg.channels, cfg.d_tr, &cfg.aspp_rates, rng),
            seg_head: SegHead::new(cfg.d_tr, cfg.seg_hidden, cfg.num_classes, cfg.stride, rng),
            proj_head: ProjHead::new(cfg.d_tr, cfg.d_cl, rng),
            schedule,
        };
        model.set_trainable(true);
        model
    }

    /// Schedule to use for a clip of length `n`: the model's own schedule for
    /// full clips, or one singleton configuration per block for single
    /// frames (used when embedding key frames on the momentum branch).
    fn schedule_for(&self, n: usize) -> TimeShiftSchedule {
        if n == self.cfg.clip_len {
            return self.schedule.clone();
        }
        assert_eq!(n, 1, "clips must have length {} or 1, got {n}", self.cfg.clip_len);
        let one = time_shift_schedule(1);
        TimeShiftSchedule {
            clip_len: 1,
            configs: (0..self.schedule.len()).map(|_| one.configs[0].clone()).collect(),
        }
    }

    /// Run the trunk over a clip and fuse features for the `wanted` frame
    /// indices. Returns one stride-S, D_Tr-wide map per wanted index.
    pub fn encode(&self, frames: &[Tensor], wanted: &[usize]) -> Vec<FeatureMap> {
        assert!(!frames.is_empty(), "empty clip");
        let schedule = self.schedule_for(frames.len());
        let feats: Vec<Tensor> = frames.iter().map(|f| self.backbone.forward(f)).collect();
        let low = clip_forward(&feats, &schedule, &self.stage1_blocks);
        let merged: Vec<Tensor> = low.iter().map(|f| self.merge.forward(f)).collect();
        let deep = clip_forward(&merged, &schedule, &self.stage2_blocks);
        wanted
            .iter()
            .map(|&t| FeatureMap {
                tokens: self.aspp.forward(&low[t], &deep[t]),
                timestep: t,
                video: 0,
            })
            .collect()
    }

    /// Class logits for the final frame of the clip, at frame resolution.
    pub fn seg_logits_last(&self, frames: &[Tensor]) -> Tensor {
        let z = self.encode(frames, &[frames.len() - 1]);
        self.seg_head.forward(&z[0].tokens)
    }

    /// Unit-norm projection embeddings for the final frame: [h*w, D_cl].
    pub fn proj_last(&self, frames: &[Tensor]) -> Tensor {
        let z = self.encode(frames, &[frames.len() - 1]);
        self.proj_head.forward(&z[0].tokens)
    }

    /// All parameters in a fixed traversal order.
    pub fn named_params(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        self.backbone.visit_params("backbone", &mut out);
        for (i, b) in self.stage1_blocks.iter().enumerate() {
            b.visit_params(&format!("stage1.block{i}"), &mut out);
        }
        self.merge.visit_params("merge", &mut out);
        for (i, b) in self.stage2_blocks.iter().enumerate() {
            b.visit_params(&format!("stage2.block{i}"), &mut out);
        }
        self.aspp.visit_params("aspp", &mut out);
        self.seg_head.visit_params("seg_head", &mut out);
        self.proj_head.visit_params("proj_head", &mut out);
        out
    }

    pub fn param_count(&self) -> usize {
        self.named_params().iter().map(|(_, t)| t.numel()).sum()
    }

    pub fn set_trainable(&self, flag: bool) {
        for (_, t) in self.named_params() {
            t.set_requires_grad(flag);
        }
    }

    pub fn zero_grads(&self) {
        for (_, t) in self.named_params() {
            t.zero_grad();
        }
    }

    /// Structural copy with the same weights but fresh, untracked tensors.
    pub fn detached_clone(&self) -> Model {
        let mut dummy = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let copy = Model::new(&self.cfg, &mut dummy);
        let src = self.named_params();
        let dst = copy.named_params();
        assert_eq!(src.len(), dst.len());
        for ((sn, st), (dn, dt)) in src.iter().zip(dst.iter()) {
            assert_eq!(sn, dn, "parameter order must be stable");
            dt.set_data(st.to_vec());
        }
        copy.set_trainable(false);
        copy
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::ChaCha8Rng;

    fn small_cfg() -> ModelConfig {
        ModelConfig {
            height: 16,
            width: 16,
            stride: 4,
            channels: 8,
            clip_len: 2,
            window: 2,
            num_heads: 2,
            d_tr: 16,
            d_cl: 4,
            num_classes: 3,
            aspp_rates: vec![1],
            seg_hidden: 4,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn logits_have_frame_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = Model::new(&small_cfg(), &mut rng);
        let frames: Vec<Tensor> =
            (0..2).map(|_| Tensor::uniform(&[16, 16, 3], 0.0, 1.0, &mut rng)).collect();
        let logits = model.seg_logits_last(&frames);
        assert_eq!(logits.shape(), &[16, 16, 3]);
        let e = model.proj_last(&frames);
        assert_eq!(e.shape(), &[16, 4]);
    }

    #[test]
    fn param_count_is_input_size_independent() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = Model::new(&small_cfg(), &mut rng);
        let big = ModelConfig { height: 32, width: 24, ..small_cfg() };
        let b = Model::new(&big, &mut rng);
        assert_eq!(a.param_count(), b.param_count());
    }

    #[test]
    fn detached_clone_matches_and_is_frozen() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model = Model::new(&small_cfg(), &mut rng);
        let copy = model.detached_clone();
        for ((_, a), (_, b)) in model.named_params().iter().zip(copy.named_params()) {
            assert_eq!(a.to_vec(), b.to_vec());
            assert!(!b.requires_grad());
        }
    }

    #[test]
    fn end_to_end_grad_check_on_small_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let model = Model::new(&small_cfg(), &mut rng);
        let prev = Tensor::uniform(&[16, 16, 3], 0.0, 1.0, &mut rng);
        let x0 = Tensor::uniform(&[16, 16, 3], 0.0, 1.0, &mut rng);
        // Scalar probe of the logits; checks the whole trunk end to end.
        let probe = Tensor::uniform(&[16 * 16, 3], -1.0, 1.0, &mut rng);
        let err = crate::tensor::grad_check(
            |x| {
                let logits = model.seg_logits_last(&[prev.clone(), x.clone()]);
                logits.reshape(&[16 * 16, 3]).mul(&probe).sum_all()
            },
            &x0,
            1e-5,
        );
        assert!(err < 1e-5, "end-to-end grad error {err}");
    }
}

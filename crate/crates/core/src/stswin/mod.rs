//! Joint space-time shifted-window attention.
//!
//! A feature map is split into non-overlapping M x M windows, optionally
//! spanning two timesteps; self-attention runs within each window. Window
//! interaction comes from two shifts: the space shift rolls the map by
//! (M/2, M/2) between consecutive layers (implemented with a cyclic roll
//! plus an additive mask), and the time shift re-pairs which two frames
//! share a block so that, over a schedule of block configurations, every
//! frame of a clip sees every other frame.

mod attention;
mod block;
mod clip;
mod mask;
mod schedule;
mod window;

pub use attention::{windowed_mhsa, AttentionWeights};
pub use block::{shifted_window_attention, LayerNorm, Mlp, StswinBlock};
pub use clip::{clip_forward, gradient_dependency};
pub use mask::{make_shift_mask, region_grid, window_masks};
pub use schedule::{time_shift_schedule, PairConfig, Pairing, TimeShiftSchedule};
pub use window::{window_partition, window_reverse, Window, WindowSet};

use serde::{Deserialize, Serialize};

/// Additive mask value that saturates the softmax without overflowing f64.
pub const MASK_NEG: f64 = -1e9;

/// Shape of one Transformer block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockConfig {
    /// Window side length M.
    pub window: usize,
    pub num_heads: usize,
    pub channels: usize,
    pub mlp_ratio: f64,
    pub use_relative_position_bias: bool,
}

impl BlockConfig {
    pub fn new(window: usize, num_heads: usize, channels: usize) -> BlockConfig {
        let cfg = BlockConfig {
            window,
            num_heads,
            channels,
            mlp_ratio: 4.0,
            use_relative_position_bias: true,
        };
        cfg.validate();
        cfg
    }

    pub fn validate(&self) {
        assert!(self.window >= 1, "window size must be >= 1");
        assert!(self.num_heads >= 1, "need at least one head");
        assert_eq!(
            self.channels % self.num_heads,
            0,
            "channels {} not divisible by heads {}",
            self.channels,
            self.num_heads
        );
        assert!(self.mlp_ratio > 0.0, "mlp_ratio must be positive");
    }

    pub fn head_dim(&self) -> usize {
        self.channels / self.num_heads
    }

    pub fn mlp_hidden(&self) -> usize {
        ((self.channels as f64 * self.mlp_ratio).round() as usize).max(1)
    }
}

//! Datasets: a synthetic moving-shapes video generator and an on-disk loader.
//!
//! The on-disk layout is dependency-free and bit-exact: frames as binary PPM
//! (P6, 8-bit), labels as binary PGM (P5, one class index per pixel, 255 =
//! ignore), plus a JSON manifest listing videos and train/val/test splits.

mod loader;
mod pnm;
mod sampler;
mod synth;

pub use loader::{Dataset, LoadedFrame, Manifest, Split, VideoEntry};
pub use pnm::{read_pgm, read_ppm, write_pgm, write_ppm};
pub use sampler::sample_batch;
pub use synth::{generate_synthetic, plan_video, render_frame, render_labels, SynthConfig, VideoPlan};

use thiserror::Error;

use crate::tensor::Tensor;

pub const IGNORE_ID: u8 = 255;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {detail}")]
    Malformed { path: String, detail: String },
    #[error("{path}: label {value} out of range (classes 0..{num_classes}, ignore {ignore})")]
    LabelOutOfRange { path: String, value: u8, num_classes: usize, ignore: u8 },
    #[error("{0}")]
    Config(String),
}

/// Dense per-pixel class indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    pub h: usize,
    pub w: usize,
    pub data: Vec<u8>,
}

impl LabelMap {
    pub fn new(h: usize, w: usize, data: Vec<u8>) -> LabelMap {
        assert_eq!(data.len(), h * w, "label map size mismatch");
        LabelMap { h, w, data }
    }

    pub fn filled(h: usize, w: usize, v: u8) -> LabelMap {
        LabelMap { h, w, data: vec![v; h * w] }
    }

    pub fn get(&self, y: usize, x: usize) -> u8 {
        self.data[y * self.w + x]
    }

    pub fn set(&mut self, y: usize, x: usize, v: u8) {
        self.data[y * self.w + x] = v;
    }

    /// Count of pixels not equal to `ignore`.
    pub fn labeled_count(&self, ignore: u8) -> usize {
        self.data.iter().filter(|&&v| v != ignore).count()
    }
}

/// A run of consecutive frames from one video with their labels. Videos
/// shorter than the requested clip are padded on the left by repeating the
/// first frame.
pub struct VideoClip {
    pub frames: Vec<Tensor>,
    pub labels: Vec<LabelMap>,
    pub video_index: usize,
    /// Timestep of the first real (unpadded) frame.
    pub start: usize,
    /// Timestep of the last frame; predictions target this frame.
    pub t_end: usize,
}

impl VideoClip {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn last_frame(&self) -> &Tensor {
        self.frames.last().expect("empty clip")
    }

    pub fn last_labels(&self) -> &LabelMap {
        self.labels.last().expect("empty clip")
    }
}

//! Key-frame assembly from the three sources.

use rand::Rng;

use super::KeySourceSpec;
use crate::data::{DataError, Dataset, LabelMap, Split, VideoClip};
use crate::tensor::Tensor;
use crate::train::{augment_frame, AugProfile};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KeySource {
    /// The query frame under an independent augmentation.
    AugmentedSelf,
    /// A same-video frame next to the query timestep.
    Adjacent,
    /// A random frame of a randomly chosen other video.
    CrossVideo,
}

pub struct KeyFrameSample {
    pub frame: Tensor,
    pub labels: LabelMap,
    pub source: KeySource,
    pub video: usize,
    pub timestep: usize,
}

/// Gather key frames for one query clip: optionally the query frame itself
/// re-augmented, the nearest same-video neighbours of the query timestep,
/// and one random frame from each of `num_cross_video` distinct other
/// videos of the split. Every key receives its own augmentation draw.
pub fn assemble_key_batch<R: Rng>(
    clip: &VideoClip,
    ds: &Dataset,
    split: Split,
    spec: &KeySourceSpec,
    profile: &AugProfile,
    rng: &mut R,
) -> Result<Vec<KeyFrameSample>, DataError> {
    let ignore = ds.ignore_id();
    let mut keys = Vec::with_capacity(spec.total_keys());
    if spec.include_augmented_self {
        let (frame, labels) =
            augment_frame(clip.last_frame(), clip.last_labels(), profile, ignore, rng);
        keys.push(KeyFrameSample {
            frame,
            labels,
            source: KeySource::AugmentedSelf,
            video: clip.video_index,
            timestep: clip.t_end,
        });
    }
    if spec.num_adjacent > 0 {
        let len = ds.video_len(clip.video_index);
        let mut picked = Vec::with_capacity(spec.num_adjacent);
        // Nearest unused neighbours, preferring earlier frames.
        let mut offset = 1isize;
        while picked.len() < spec.num_adjacent && (offset as usize) <= len {
            for t in [clip.t_end as isize - offset, clip.t_end as isize + offset] {
                if picked.len() == spec.num_adjacent {
                    break;
                }
                if t >= 0 && (t as usize) < len {
                    picked.push(t as usize);
                }
            }
            offset += 1;
        }
        for t in picked {
            let loaded = ds.frame(clip.video_index, t)?;
            let (frame, labels) = augment_frame(&loaded.image, &loaded.labels, profile, ignore, rng);
            keys.push(KeyFrameSample {
                frame,
                labels,
                source: KeySource::Adjacent,
                video: clip.video_index,
                timestep: t,
            });
        }
    }
    if spec.num_cross_video > 0 {
        let others: Vec<usize> = ds
            .videos(split)
            .iter()
            .copied()
            .filter(|&v| v != clip.video_index)
            .collect();
        if others.len() < spec.num_cross_video {
            return Err(DataError::Config(format!(
                "{} cross-video keys requested but only {} other videos in the split",
                spec.num_cross_video,
                others.len()
            )));
        }
        let chosen = rand::seq::index::sample(rng, others.len(), spec.num_cross_video);
        for ci in chosen.iter() {
            let video = others[ci];
            let t = rng.gen_range(0..ds.video_len(video));
            let loaded = ds.frame(video, t)?;
            let (frame, labels) = augment_frame(&loaded.image, &loaded.labels, profile, ignore, rng);
            keys.push(KeyFrameSample { frame, labels, source: KeySource::CrossVideo, video, timestep: t });
        }
    }
    Ok(keys)
}

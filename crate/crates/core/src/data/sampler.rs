//! Clip batch sampling for training.

use rand::Rng;

use super::{DataError, Dataset, Split, VideoClip};

/// Draw a batch of clips from distinct videos of the split. Each clip is
/// `n` consecutive frames ending at a uniformly sampled timestep (videos
/// shorter than `n` are left-padded by first-frame repetition).
pub fn sample_batch<R: Rng>(
    ds: &Dataset,
    split: Split,
    n: usize,
    batch_size: usize,
    rng: &mut R,
) -> Result<Vec<VideoClip>, DataError> {
    let vids = ds.videos(split);
    if batch_size > vids.len() {
        return Err(DataError::Config(format!(
            "batch size {batch_size} exceeds the {} videos of the split",
            vids.len()
        )));
    }
    let picked = rand::seq::index::sample(rng, vids.len(), batch_size);
    let mut out = Vec::with_capacity(batch_size);
    for pi in picked.iter() {
        let video = vids[pi];
        let len = ds.video_len(video);
        let lo = (n - 1).min(len - 1);
        let t_end = rng.gen_range(lo..len);
        out.push(ds.clip(video, t_end, n)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::super::synth::{generate_synthetic, SynthConfig};
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dataset() -> (tempfile::TempDir, Dataset) {
        let cfg = SynthConfig {
            num_videos: 4,
            frames_per_video: 10,
            height: 32,
            width: 24,
            num_classes: 4,
            train_videos: 3,
            val_videos: 0,
            test_videos: 1,
            seed: 5,
            ..SynthConfig::default()
        };
        let dir = tempfile::tempdir().unwrap();
        generate_synthetic(&cfg, dir.path()).unwrap();
        let ds = Dataset::load(dir.path()).unwrap();
        (dir, ds)
    }

    #[test]
    fn single_clip_batch() {
        let (_d, ds) = dataset();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let batch = sample_batch(&ds, Split::Train, 4, 1, &mut rng).unwrap();
        assert_eq!(batch.len(), 1);
        assert_eq!(batch[0].len(), 4);
    }

    #[test]
    fn batches_use_distinct_videos_and_consecutive_frames() {
        let (_d, ds) = dataset();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let batch = sample_batch(&ds, Split::Train, 3, 3, &mut rng).unwrap();
            let mut vids: Vec<usize> = batch.iter().map(|c| c.video_index).collect();
            vids.sort_unstable();
            vids.dedup();
            assert_eq!(vids.len(), 3, "videos must be distinct");
            for clip in &batch {
                // Consecutive timesteps: start..=t_end spans exactly the
                // unpadded suffix of the clip.
                assert!(clip.t_end >= clip.start);
                assert!(clip.t_end - clip.start <= 2);
            }
        }
    }

    #[test]
    fn oversized_batch_is_a_config_error() {
        let (_d, ds) = dataset();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(sample_batch(&ds, Split::Train, 2, 5, &mut rng).is_err());
    }

    #[test]
    fn video_sampling_is_roughly_uniform() {
        let (_d, ds) = dataset();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut counts = [0u32; 4];
        let draws = 3000;
        for _ in 0..draws {
            let batch = sample_batch(&ds, Split::Train, 2, 1, &mut rng).unwrap();
            counts[batch[0].video_index] += 1;
        }
        // Three train videos, expect draws/3 each within 3 sigma of binomial.
        let expect = draws as f64 / 3.0;
        let sigma = (draws as f64 * (1.0 / 3.0) * (2.0 / 3.0)).sqrt();
        for &vid in ds.videos(Split::Train) {
            let c = counts[vid] as f64;
            assert!((c - expect).abs() < 3.0 * sigma, "video {vid} drawn {c} times, expected ~{expect}");
        }
    }
}

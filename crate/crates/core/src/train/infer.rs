//! Sliding-window inference and split evaluation.

use crate::data::{DataError, Dataset, LabelMap, Split};
use crate::segnet::Model;
use crate::tensor::{no_grad, Tensor};

/// Predict a label map per frame: each frame t is predicted from the clip
/// (t-N+1..t), left-padded by repeating the first frame, so the output at t
/// depends only on frames up to t.
pub fn sliding_inference(model: &Model, frames: &[Tensor]) -> Vec<LabelMap> {
    assert!(!frames.is_empty(), "empty video");
    let n = model.cfg.clip_len;
    let k = model.cfg.num_classes;
    no_grad(|| {
        (0..frames.len())
            .map(|t| {
                let clip: Vec<Tensor> = (0..n)
                    .map(|i| {
                        let idx = (t + i).saturating_sub(n - 1);
                        frames[idx.min(t)].clone()
                    })
                    .collect();
                let logits = model.seg_logits_last(&clip);
                let (h, w) = (logits.shape()[0], logits.shape()[1]);
                let d = logits.data();
                let mut labels = vec![0u8; h * w];
                for p in 0..h * w {
                    let row = &d[p * k..(p + 1) * k];
                    let mut best = 0usize;
                    for c in 1..k {
                        if row[c] > row[best] {
                            best = c;
                        }
                    }
                    labels[p] = best as u8;
                }
                LabelMap::new(h, w, labels)
            })
            .collect()
    })
}

/// Run sliding inference over every video of a split and score it with both
/// protocols.
pub fn evaluate_split(
    model: &Model,
    ds: &Dataset,
    split: Split,
) -> Result<crate::metrics::MetricsReport, DataError> {
    let mut preds: Vec<Vec<LabelMap>> = Vec::new();
    let mut gts: Vec<Vec<LabelMap>> = Vec::new();
    let mut ids = Vec::new();
    for &video in ds.videos(split) {
        let len = ds.video_len(video);
        let mut frames = Vec::with_capacity(len);
        let mut labels = Vec::with_capacity(len);
        for t in 0..len {
            let f = ds.frame(video, t)?;
            frames.push(f.image);
            labels.push(f.labels);
        }
        preds.push(sliding_inference(model, &frames));
        gts.push(labels);
        ids.push(ds.video_id(video).to_string());
    }
    Ok(crate::metrics::MetricsReport::build(
        &ids,
        &preds,
        &gts,
        ds.num_classes(),
        0,
        ds.ignore_id(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segnet::ModelConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model(n: usize) -> Model {
        let cfg = ModelConfig {
            height: 16,
            width: 16,
            stride: 4,
            channels: 8,
            clip_len: n,
            num_heads: 2,
            d_tr: 16,
            d_cl: 4,
            num_classes: 3,
            aspp_rates: vec![1],
            seg_hidden: 4,
            ..ModelConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(40 + n as u64);
        Model::new(&cfg, &mut rng)
    }

    fn video(len: usize, seed: u64) -> Vec<Tensor> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| Tensor::uniform(&[16, 16, 3], 0.0, 1.0, &mut rng)).collect()
    }

    #[test]
    fn constant_video_gives_identical_predictions() {
        let m = model(3);
        let frame = video(1, 1).pop().unwrap();
        let frames = vec![frame.clone(), frame.clone(), frame.clone(), frame];
        let preds = sliding_inference(&m, &frames);
        for p in &preds[1..] {
            assert_eq!(p, &preds[0]);
        }
    }

    #[test]
    fn inference_is_causal() {
        let m = model(3);
        let frames = video(6, 2);
        let full = sliding_inference(&m, &frames);
        let truncated = sliding_inference(&m, &frames[..4]);
        for t in 0..4 {
            assert_eq!(full[t], truncated[t], "frame {t} depends on the future");
        }
    }

    #[test]
    fn single_frame_clips_are_order_independent() {
        let m = model(1);
        let frames = video(5, 3);
        let preds = sliding_inference(&m, &frames);
        let mut rev_frames = frames.clone();
        rev_frames.reverse();
        let mut rev = sliding_inference(&m, &rev_frames);
        rev.reverse();
        assert_eq!(preds, rev);
    }
}

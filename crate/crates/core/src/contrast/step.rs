//! One contrastive forward: the online branch embeds the query clip, the
//! momentum branch embeds each key frame with gradients blocked.

use super::{downsample_labels, pixel_contrast_loss, ContrastLoss, KeyFrameSample, MomentumEncoder, PairBatch};
use crate::data::VideoClip;
use crate::segnet::Model;
use crate::tensor::no_grad;

pub struct ContrastStep {
    pub loss: ContrastLoss,
    pub num_keys: usize,
}

/// Compute the contrast loss for an (already augmented) query clip against
/// its key frames. Key embeddings come from the momentum branch inside a
/// no-grad region, so only the online branch receives gradients. EMA updates
/// happen between steps, not here.
pub fn contrast_step(
    online: &Model,
    momentum: &MomentumEncoder,
    query_clip: &VideoClip,
    keys: &[KeyFrameSample],
    temperature: f64,
) -> ContrastStep {
    let stride = online.cfg.stride;
    let ignore = online.cfg.ignore_id;
    let e_q = online.proj_last(&query_clip.frames);
    let y_q = downsample_labels(query_clip.last_labels(), stride);
    let key_parts = keys
        .iter()
        .map(|k| {
            let e_k = no_grad(|| momentum.model.proj_last(std::slice::from_ref(&k.frame)));
            let y_k = downsample_labels(&k.labels, stride);
            (e_k, y_k, k.source)
        })
        .collect();
    let batch = PairBatch::new(e_q, y_q, key_parts, ignore, temperature);
    ContrastStep { loss: pixel_contrast_loss(&batch), num_keys: keys.len() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contrast::KeySource;
    use crate::data::LabelMap;
    use crate::segnet::ModelConfig;
    use crate::tensor::Tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_model(rng: &mut ChaCha8Rng) -> Model {
        let cfg = ModelConfig {
            height: 16,
            width: 16,
            stride: 4,
            channels: 8,
            clip_len: 2,
            num_heads: 2,
            d_tr: 16,
            d_cl: 4,
            num_classes: 3,
            aspp_rates: vec![1],
            seg_hidden: 4,
            ..ModelConfig::default()
        };
        Model::new(&cfg, rng)
    }

    fn scene(rng: &mut ChaCha8Rng) -> (Tensor, LabelMap) {
        let img = Tensor::uniform(&[16, 16, 3], 0.0, 1.0, rng);
        let labels = LabelMap::new(16, 16, (0..256).map(|i| ((i / 64) % 3) as u8).collect());
        (img, labels)
    }

    #[test]
    fn momentum_branch_never_accumulates_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let online = small_model(&mut rng);
        let momentum = MomentumEncoder::new(&online, 0.999);
        let (f0, l0) = scene(&mut rng);
        let (f1, l1) = scene(&mut rng);
        let clip = VideoClip { frames: vec![f0, f1], labels: vec![l0, l1.clone()], video_index: 0, start: 0, t_end: 1 };
        let (kf, kl) = scene(&mut rng);
        let keys = vec![KeyFrameSample { frame: kf, labels: kl, source: KeySource::CrossVideo, video: 1, timestep: 0 }];
        let step = contrast_step(&online, &momentum, &clip, &keys, 1.0);
        assert!(!step.loss.empty);
        step.loss.value.backward();
        for (_, p) in momentum.model.named_params() {
            assert!(p.grad().is_none(), "shadow parameter received a gradient");
        }
        // The online branch does get gradients somewhere.
        let any = online.named_params().iter().any(|(_, p)| {
            p.grad().map(|g| g.iter().any(|v| v.abs() > 0.0)).unwrap_or(false)
        });
        assert!(any, "online branch should receive gradients");
    }

    #[test]
    fn identical_branches_and_identity_aug_give_unit_self_cosine() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let online = small_model(&mut rng);
        let momentum = MomentumEncoder::new(&online, 1.0);
        let (f, l) = scene(&mut rng);
        // Query clip of length 1 and the very same frame as the key: the
        // embeddings must coincide, so every positive-with-itself cosine is 1.
        let clip = VideoClip { frames: vec![f.clone()], labels: vec![l.clone()], video_index: 0, start: 0, t_end: 0 };
        let e_q = online.proj_last(&clip.frames);
        let e_k = no_grad(|| momentum.model.proj_last(&[f]));
        let d = e_q.shape()[1];
        let qv = e_q.to_vec();
        let kv = e_k.to_vec();
        for r in 0..e_q.shape()[0] {
            let cos: f64 = (0..d).map(|j| qv[r * d + j] * kv[r * d + j]).sum();
            assert!((cos - 1.0).abs() < 1e-10, "row {r} cosine {cos}");
        }
    }

    #[test]
    fn loss_gradient_passes_finite_differences_through_the_network() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let online = small_model(&mut rng);
        let momentum = MomentumEncoder::new(&online, 0.999);
        let (f0, l0) = scene(&mut rng);
        let (kf, kl) = scene(&mut rng);
        let keys = vec![KeyFrameSample { frame: kf, labels: kl, source: KeySource::CrossVideo, video: 1, timestep: 0 }];
        let x0 = Tensor::uniform(&[16, 16, 3], 0.0, 1.0, &mut rng);
        let err = crate::tensor::grad_check(
            |x| {
                let clip = VideoClip {
                    frames: vec![f0.clone(), x.clone()],
                    labels: vec![l0.clone(), l0.clone()],
                    video_index: 0,
                    start: 0,
                    t_end: 1,
                };
                contrast_step(&online, &momentum, &clip, &keys, 1.0).loss.value
            },
            &x0,
            1e-5,
        );
        assert!(err < 1e-5, "contrast step grad error {err}");
    }
}

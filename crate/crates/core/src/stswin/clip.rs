//! Applying a schedule of blocks to a whole clip.

use super::{StswinBlock, TimeShiftSchedule};
use crate::tensor::Tensor;

/// Run one block per schedule configuration over the clip's feature maps.
/// Pairs are processed jointly (two timesteps in one window), singletons go
/// through the same block with a temporal window of one. Requires exactly
/// one block per configuration.
pub fn clip_forward(
    features: &[Tensor],
    schedule: &TimeShiftSchedule,
    blocks: &[StswinBlock],
) -> Vec<Tensor> {
    assert_eq!(features.len(), schedule.clip_len, "clip length does not match schedule");
    assert_eq!(
        blocks.len(),
        schedule.configs.len(),
        "need one block per schedule configuration ({} configs, {} blocks)",
        schedule.configs.len(),
        blocks.len()
    );
    let mut feats: Vec<Tensor> = features.to_vec();
    for (cfg, block) in schedule.configs.iter().zip(blocks) {
        for &(a, b) in &cfg.pairs {
            let out = block.forward(&[&feats[a], &feats[b]]);
            let mut it = out.into_iter();
            feats[a] = it.next().unwrap();
            feats[b] = it.next().unwrap();
        }
        for &s in &cfg.singletons {
            feats[s] = block.forward(&[&feats[s]]).pop().unwrap();
        }
    }
    feats
}

/// Frame-to-frame gradient dependency: entry (t, u) is true when output
/// frame t has a nonzero gradient with respect to input frame u. Used to
/// check the schedule's receptive-field claims against the real network.
pub fn gradient_dependency(
    features: &[Tensor],
    schedule: &TimeShiftSchedule,
    blocks: &[StswinBlock],
) -> Vec<Vec<bool>> {
    let n = features.len();
    let mut matrix = vec![vec![false; n]; n];
    for t in 0..n {
        let leaves: Vec<Tensor> = features
            .iter()
            .map(|f| {
                let leaf = f.detach();
                leaf.set_requires_grad(true);
                leaf
            })
            .collect();
        let out = clip_forward(&leaves, schedule, blocks);
        out[t].sum_all().backward();
        for (u, leaf) in leaves.iter().enumerate() {
            let coupled = leaf
                .grad()
                .map(|g| g.iter().any(|v| v.abs() > 1e-12))
                .unwrap_or(false);
            matrix[t][u] = coupled;
        }
    }
    matrix
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stswin::{time_shift_schedule, BlockConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn blocks_for(n: usize, rng: &mut ChaCha8Rng) -> (TimeShiftSchedule, Vec<StswinBlock>) {
        let schedule = time_shift_schedule(n);
        let cfg = BlockConfig {
            window: 2,
            num_heads: 2,
            channels: 4,
            mlp_ratio: 1.0,
            use_relative_position_bias: true,
        };
        let blocks = (0..schedule.len()).map(|_| StswinBlock::new(&cfg, rng)).collect();
        (schedule, blocks)
    }

    fn random_clip(n: usize, rng: &mut ChaCha8Rng) -> Vec<Tensor> {
        (0..n).map(|_| Tensor::uniform(&[4, 4, 4], -0.5, 0.5, rng)).collect()
    }

    #[test]
    fn single_frame_clip_equals_single_block() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let (schedule, blocks) = blocks_for(1, &mut rng);
        let clip = random_clip(1, &mut rng);
        let out = clip_forward(&clip, &schedule, &blocks);
        let direct = blocks[0].forward(&[&clip[0]]);
        assert_eq!(crate::tensor::max_abs_diff(&out[0], &direct[0]), 0.0);
    }

    #[test]
    fn full_schedule_gradients_are_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (schedule, blocks) = blocks_for(4, &mut rng);
        let clip = random_clip(4, &mut rng);
        let dep = gradient_dependency(&clip, &schedule, &blocks);
        for row in &dep {
            assert!(row.iter().all(|&v| v), "expected dense dependency, got {dep:?}");
        }
    }

    #[test]
    fn truncated_schedule_gradients_match_prediction() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let (mut schedule, mut blocks) = blocks_for(4, &mut rng);
        schedule.configs.truncate(1);
        blocks.truncate(1);
        let clip = random_clip(4, &mut rng);
        let dep = gradient_dependency(&clip, &schedule, &blocks);
        let predicted = schedule.simulate_dependency();
        assert_eq!(dep, predicted);
        // Frame 0 must not see frames 2 and 3 after one configuration.
        assert!(!dep[0][2] && !dep[0][3]);
    }

    #[test]
    #[should_panic(expected = "one block per schedule configuration")]
    fn block_count_mismatch_panics() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let (schedule, mut blocks) = blocks_for(4, &mut rng);
        blocks.pop();
        let clip = random_clip(4, &mut rng);
        let _ = clip_forward(&clip, &schedule, &blocks);
    }
}

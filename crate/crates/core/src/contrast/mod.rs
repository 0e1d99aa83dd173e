//! Supervised inter-video pixel-to-pixel contrast.
//!
//! Query pixels come from the current frame through the online branch; key
//! pixels come from multiple sources (the same frame under a different
//! perturbation, adjacent frames, frames of other videos) through a
//! momentum-averaged copy of the network. Ground-truth labels decide which
//! pairs are positive. Positive similarities are averaged over all key
//! pixels; negative similarities are averaged within each key frame and the
//! per-frame means are summed.

mod keys;
mod momentum;
mod step;

pub use keys::{assemble_key_batch, KeyFrameSample, KeySource};
pub use momentum::{ema_update_params, MomentumEncoder};
pub use step::{contrast_step, ContrastStep};

use serde::{Deserialize, Serialize};

use crate::data::LabelMap;
use crate::tensor::Tensor;

/// How key frames are gathered for each query clip.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeySourceSpec {
    /// Same-video frames adjacent to the query timestep (mainly positives).
    pub num_adjacent: usize,
    /// Frames drawn one each from distinct other videos (mainly negatives).
    pub num_cross_video: usize,
    /// Include the query frame itself under an independent augmentation.
    pub include_augmented_self: bool,
}

impl Default for KeySourceSpec {
    fn default() -> KeySourceSpec {
        KeySourceSpec { num_adjacent: 1, num_cross_video: 3, include_augmented_self: true }
    }
}

impl KeySourceSpec {
    pub fn pair_config(num_adjacent: usize, num_cross_video: usize) -> KeySourceSpec {
        KeySourceSpec { num_adjacent, num_cross_video, include_augmented_self: true }
    }

    pub fn total_keys(&self) -> usize {
        self.num_adjacent + self.num_cross_video + usize::from(self.include_augmented_self)
    }
}

/// Nearest-neighbour label reduction to the feature grid: each SxS cell is
/// represented by its top-left pixel. Class ids are preserved exactly.
pub fn downsample_labels(y: &LabelMap, s: usize) -> LabelMap {
    assert!(s >= 1, "stride must be >= 1");
    assert!(y.h.is_multiple_of(s) && y.w.is_multiple_of(s), "labels {}x{} not divisible by stride {s}", y.h, y.w);
    if s == 1 {
        return y.clone();
    }
    let (ho, wo) = (y.h / s, y.w / s);
    let mut out = Vec::with_capacity(ho * wo);
    for oy in 0..ho {
        for ox in 0..wo {
            out.push(y.get(oy * s, ox * s));
        }
    }
    LabelMap::new(ho, wo, out)
}

/// Binary positive-pair mask: entry (i, j) is 1 iff query pixel i and key
/// pixel j carry the same label and neither is the ignore class. Row-major
/// [query_pixels x key_pixels].
pub fn label_mask(y_q: &LabelMap, y_k: &LabelMap, ignore: u8) -> Vec<u8> {
    let p = y_q.data.len();
    let pk = y_k.data.len();
    let mut mask = vec![0u8; p * pk];
    for (i, &yi) in y_q.data.iter().enumerate() {
        if yi == ignore {
            continue;
        }
        for (j, &yj) in y_k.data.iter().enumerate() {
            if yj != ignore && yj == yi {
                mask[i * pk + j] = 1;
            }
        }
    }
    mask
}

/// One key frame inside a [`PairBatch`]: embeddings, labels at the feature
/// grid, and the label-derived masks against the batch's query.
pub struct PairKey {
    pub embeddings: Tensor,
    pub labels: LabelMap,
    pub source: KeySource,
    pub positive_mask: Vec<u8>,
    pub negative_mask: Vec<u8>,
}

/// Query embeddings plus multi-source keys and their pair masks.
pub struct PairBatch {
    pub query: Tensor,
    pub query_labels: LabelMap,
    pub keys: Vec<PairKey>,
    pub ignore: u8,
    pub temperature: f64,
}

impl PairBatch {
    pub fn new(
        query: Tensor,
        query_labels: LabelMap,
        keys: Vec<(Tensor, LabelMap, KeySource)>,
        ignore: u8,
        temperature: f64,
    ) -> PairBatch {
        let p = query.shape()[0];
        assert_eq!(p, query_labels.data.len(), "query embeddings do not match label grid");
        assert!(temperature > 0.0, "temperature must be positive");
        let keys = keys
            .into_iter()
            .map(|(embeddings, labels, source)| {
                assert_eq!(
                    embeddings.shape()[0],
                    labels.data.len(),
                    "key embeddings do not match label grid"
                );
                assert_eq!(embeddings.shape()[1], query.shape()[1], "embedding widths differ");
                let positive_mask = label_mask(&query_labels, &labels, ignore);
                // Negatives: both labeled, classes differ.
                let pk = labels.data.len();
                let mut negative_mask = vec![0u8; p * pk];
                for (i, &yi) in query_labels.data.iter().enumerate() {
                    if yi == ignore {
                        continue;
                    }
                    for (j, &yj) in labels.data.iter().enumerate() {
                        if yj != ignore && yj != yi {
                            negative_mask[i * pk + j] = 1;
                        }
                    }
                }
                PairKey { embeddings, labels, source, positive_mask, negative_mask }
            })
            .collect();
        PairBatch { query, query_labels, keys, ignore, temperature }
    }
}

pub struct ContrastLoss {
    pub value: Tensor,
    /// Query pixels with at least one positive and one negative.
    pub contributing: usize,
    /// Set when no pixel contributed (loss is a constant zero).
    pub empty: bool,
}

/// The pixel contrast objective. Per contributing query pixel i:
/// `Sp_i` = mean similarity over all positives pooled across key frames,
/// `Sn_i` = sum over key frames of that frame's mean negative similarity,
/// `L_i = -ln(exp(Sp_i/t) / (exp(Sp_i/t) + exp(Sn_i/t)))`,
/// and the batch loss is the mean over contributing pixels. Pixels with no
/// positive or no negative anywhere are skipped.
pub fn pixel_contrast_loss(batch: &PairBatch) -> ContrastLoss {
    let p = batch.query.shape()[0];
    let mut pos_count = vec![0usize; p];
    let mut neg_any = vec![false; p];
    for key in &batch.keys {
        let pk = key.labels.data.len();
        for i in 0..p {
            pos_count[i] += key.positive_mask[i * pk..(i + 1) * pk].iter().filter(|&&m| m == 1).count();
            neg_any[i] |= key.negative_mask[i * pk..(i + 1) * pk].contains(&1);
        }
    }
    let contributing: Vec<usize> =
        (0..p).filter(|&i| pos_count[i] > 0 && neg_any[i]).collect();
    if contributing.is_empty() {
        return ContrastLoss { value: Tensor::scalar(0.0), contributing: 0, empty: true };
    }

    let mut pos_sum: Option<Tensor> = None;
    let mut neg_sum: Option<Tensor> = None;
    for key in &batch.keys {
        let pk = key.labels.data.len();
        let sims = batch.query.matmul_nt(&key.embeddings); // [p, pk]
        let pos = Tensor::from_vec(&[p, pk], key.positive_mask.iter().map(|&m| m as f64).collect());
        let contrib = sims.mul(&pos).sum_lastdim();
        pos_sum = Some(match pos_sum {
            Some(acc) => acc.add(&contrib),
            None => contrib,
        });
        // Frame-level negative normalization: weight each negative by the
        // reciprocal of this frame's per-row negative count.
        let mut neg_w = vec![0.0; p * pk];
        for i in 0..p {
            let row = &key.negative_mask[i * pk..(i + 1) * pk];
            let count = row.iter().filter(|&&m| m == 1).count();
            if count > 0 {
                let w = 1.0 / count as f64;
                for (j, &m) in row.iter().enumerate() {
                    if m == 1 {
                        neg_w[i * pk + j] = w;
                    }
                }
            }
        }
        let ncontrib = sims.mul(&Tensor::from_vec(&[p, pk], neg_w)).sum_lastdim();
        neg_sum = Some(match neg_sum {
            Some(acc) => acc.add(&ncontrib),
            None => ncontrib,
        });
    }
    let recip_pos: Vec<f64> =
        pos_count.iter().map(|&c| if c > 0 { 1.0 / c as f64 } else { 0.0 }).collect();
    let sp = pos_sum.unwrap().mul(&Tensor::from_vec(&[p], recip_pos));
    let sn = neg_sum.unwrap();
    let logits = sn.sub(&sp).mul_scalar(1.0 / batch.temperature);
    let per_pixel = logits.softplus();
    let mut weights = vec![0.0; p];
    for &i in &contributing {
        weights[i] = 1.0 / contributing.len() as f64;
    }
    let value = per_pixel.mul(&Tensor::from_vec(&[p], weights)).sum_all();
    ContrastLoss { value, contributing: contributing.len(), empty: false }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::contrast_loss_bruteforce;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_rows<R: Rng>(p: usize, d: usize, rng: &mut R) -> Tensor {
        Tensor::uniform(&[p, d], -1.0, 1.0, rng).l2_normalize_rows(1e-12).detach()
    }

    #[test]
    fn downsample_rules() {
        let y = LabelMap::new(2, 2, vec![7, 1, 2, 3]);
        assert_eq!(downsample_labels(&y, 1), y);
        let c = LabelMap::filled(4, 4, 9);
        assert_eq!(downsample_labels(&c, 2), LabelMap::filled(2, 2, 9));
        // Checkerboard of {0,1}: the top-left rule keeps class 0 everywhere.
        let mut cb = LabelMap::filled(4, 4, 0);
        for y in 0..4 {
            for x in 0..4 {
                cb.set(y, x, ((y + x) % 2) as u8);
            }
        }
        assert_eq!(downsample_labels(&cb, 2), LabelMap::filled(2, 2, 0));
    }

    #[test]
    fn label_mask_matches_double_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let yq = LabelMap::new(2, 3, (0..6).map(|_| rng.gen_range(0..4u8)).collect());
            let mut yk = LabelMap::new(2, 3, (0..6).map(|_| rng.gen_range(0..4u8)).collect());
            yk.data[3] = 255;
            let mask = label_mask(&yq, &yk, 255);
            for i in 0..6 {
                for j in 0..6 {
                    let expect = yq.data[i] != 255 && yk.data[j] != 255 && yq.data[i] == yk.data[j];
                    assert_eq!(mask[i * 6 + j] == 1, expect, "({i},{j})");
                }
            }
        }
        let same = LabelMap::filled(2, 2, 3);
        assert!(label_mask(&same, &same, 255).iter().all(|&m| m == 1));
        let a = LabelMap::filled(2, 2, 1);
        let b = LabelMap::filled(2, 2, 2);
        assert!(label_mask(&a, &b, 255).iter().all(|&m| m == 0));
    }

    #[test]
    fn symmetric_similarities_give_ln2() {
        // One query pixel; positive and negative at the same cosine.
        let query = Tensor::from_vec(&[1, 2], vec![1.0, 0.0]);
        let keys = vec![(
            Tensor::from_vec(&[2, 2], vec![0.6, 0.8, 0.6, 0.8]),
            LabelMap::new(1, 2, vec![0, 1]),
            KeySource::CrossVideo,
        )];
        let batch = PairBatch::new(query, LabelMap::new(1, 1, vec![0]), keys, 255, 1.0);
        let out = pixel_contrast_loss(&batch);
        assert!((out.value.item() - 2.0f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn closed_form_single_pair() {
        let query = Tensor::from_vec(&[1, 2], vec![1.0, 0.0]);
        let keys = vec![(
            Tensor::from_vec(&[2, 2], vec![1.0, 0.0, -1.0, 0.0]),
            LabelMap::new(1, 2, vec![0, 1]),
            KeySource::Adjacent,
        )];
        let batch = PairBatch::new(query, LabelMap::new(1, 1, vec![0]), keys, 255, 1.0);
        let out = pixel_contrast_loss(&batch);
        let expect = (1.0 + (-2.0f64).exp()).ln();
        assert!((out.value.item() - expect).abs() < 1e-9);
    }

    #[test]
    fn matches_bruteforce_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for case in 0..30 {
            let d = 4;
            let p = 16;
            let query = unit_rows(p, d, &mut rng);
            let n_keys = rng.gen_range(1..=4);
            let mut keys = Vec::new();
            let mut raw_keys = Vec::new();
            for _ in 0..n_keys {
                let e = unit_rows(p, d, &mut rng);
                let labels: Vec<u8> = (0..p)
                    .map(|_| if rng.gen_bool(0.1) { 255 } else { rng.gen_range(0..3u8) })
                    .collect();
                raw_keys.push((e.to_vec(), labels.clone()));
                keys.push((e, LabelMap::new(4, 4, labels), KeySource::CrossVideo));
            }
            let q_labels: Vec<u8> = (0..p)
                .map(|_| if rng.gen_bool(0.1) { 255 } else { rng.gen_range(0..3u8) })
                .collect();
            let batch =
                PairBatch::new(query.clone(), LabelMap::new(4, 4, q_labels.clone()), keys, 255, 1.0);
            let out = pixel_contrast_loss(&batch);
            let brute: Vec<(Vec<f64>, Vec<u8>)> = raw_keys;
            let (expect, n) = contrast_loss_bruteforce(&query.to_vec(), &q_labels, d, &brute, 255, 1.0);
            assert_eq!(out.contributing, n, "case {case}");
            assert!((out.value.item() - expect).abs() < 1e-10, "case {case}: {} vs {expect}", out.value.item());
        }
    }

    #[test]
    fn key_frame_order_does_not_matter() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let query = unit_rows(8, 4, &mut rng);
        let ql = LabelMap::new(2, 4, vec![0, 1, 2, 0, 1, 2, 0, 1]);
        let mk = |rng: &mut ChaCha8Rng| {
            (
                unit_rows(8, 4, rng),
                LabelMap::new(2, 4, (0..8).map(|_| rng.gen_range(0..3u8)).collect()),
                KeySource::CrossVideo,
            )
        };
        let k1 = mk(&mut rng);
        let k2 = mk(&mut rng);
        let k3 = mk(&mut rng);
        let fwd = pixel_contrast_loss(&PairBatch::new(
            query.clone(),
            ql.clone(),
            vec![(k1.0.clone(), k1.1.clone(), k1.2), (k2.0.clone(), k2.1.clone(), k2.2), (k3.0.clone(), k3.1.clone(), k3.2)],
            255,
            1.0,
        ));
        let rev = pixel_contrast_loss(&PairBatch::new(query, ql, vec![k3, k2, k1], 255, 1.0));
        assert!((fwd.value.item() - rev.value.item()).abs() < 1e-12);
    }

    #[test]
    fn duplicated_key_frame_adds_its_mean_negative_term() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        // Single query pixel keeps the arithmetic transparent.
        let query = unit_rows(1, 4, &mut rng);
        let ql = LabelMap::new(1, 1, vec![0]);
        let key = unit_rows(4, 4, &mut rng);
        let kl = LabelMap::new(1, 4, vec![0, 1, 1, 2]);
        let once = pixel_contrast_loss(&PairBatch::new(
            query.clone(),
            ql.clone(),
            vec![(key.clone(), kl.clone(), KeySource::CrossVideo)],
            255,
            1.0,
        ));
        let twice = pixel_contrast_loss(&PairBatch::new(
            query.clone(),
            ql,
            vec![
                (key.clone(), kl.clone(), KeySource::CrossVideo),
                (key.clone(), kl.clone(), KeySource::CrossVideo),
            ],
            255,
            1.0,
        ));
        // Sp unchanged (mean over pooled positives of identical frames);
        // Sn gains exactly the duplicated frame's mean-negative term.
        let q = query.to_vec();
        let k = key.to_vec();
        let cos = |j: usize| -> f64 { (0..4).map(|d| q[d] * k[j * 4 + d]).sum() };
        let sp = cos(0);
        let sn1 = (cos(1) + cos(2) + cos(3)) / 3.0;
        let l1 = (1.0 + (sn1 - sp).exp()).ln();
        let l2 = (1.0 + (2.0 * sn1 - sp).exp()).ln();
        assert!((once.value.item() - l1).abs() < 1e-12);
        assert!((twice.value.item() - l2).abs() < 1e-12);
    }

    #[test]
    fn loss_is_monotone_in_pair_similarities() {
        // Raising a positive's cosine lowers the loss; raising a negative's
        // cosine raises it.
        let query = Tensor::from_vec(&[1, 2], vec![1.0, 0.0]);
        let ql = LabelMap::new(1, 1, vec![0]);
        let build = |pos_cos: f64, neg_cos: f64| {
            let k = Tensor::from_vec(
                &[2, 2],
                vec![pos_cos, (1.0 - pos_cos * pos_cos).sqrt(), neg_cos, (1.0 - neg_cos * neg_cos).sqrt()],
            );
            pixel_contrast_loss(&PairBatch::new(
                query.clone(),
                ql.clone(),
                vec![(k, LabelMap::new(1, 2, vec![0, 1]), KeySource::CrossVideo)],
                255,
                1.0,
            ))
            .value
            .item()
        };
        assert!(build(0.9, 0.1) < build(0.5, 0.1));
        assert!(build(0.5, 0.6) > build(0.5, 0.1));
    }

    #[test]
    fn empty_batch_is_flagged() {
        let query = Tensor::from_vec(&[1, 2], vec![1.0, 0.0]);
        let ql = LabelMap::new(1, 1, vec![255]);
        let out = pixel_contrast_loss(&PairBatch::new(query, ql, vec![], 255, 1.0));
        assert!(out.empty);
        assert_eq!(out.value.item(), 0.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ql = LabelMap::new(2, 2, vec![0, 1, 2, 0]);
        let key = unit_rows(4, 3, &mut rng);
        let kl = LabelMap::new(2, 2, vec![0, 1, 1, 2]);
        let x0 = Tensor::uniform(&[4, 3], -1.0, 1.0, &mut rng);
        let err = crate::tensor::grad_check(
            |x| {
                // Normalize inside so the pre-normalized query is what we
                // perturb, as in the real projection path.
                let q = x.l2_normalize_rows(1e-12);
                let batch = PairBatch::new(
                    q,
                    ql.clone(),
                    vec![(key.clone(), kl.clone(), KeySource::CrossVideo)],
                    255,
                    1.0,
                );
                pixel_contrast_loss(&batch).value
            },
            &x0,
            1e-5,
        );
        assert!(err < 1e-7, "contrast grad error {err}");
    }
}

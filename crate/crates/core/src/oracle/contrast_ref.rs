//! Brute-force reference for the pixel contrast objective: explicit loops
//! over query pixels, key frames, and key pixels.

/// Reference contrast loss. `query` is [p, d] row-major with one label per
/// pixel; each key frame supplies its own embeddings (same width `d`) and
/// labels. Embeddings are assumed unit-norm so the similarity is a dot
/// product. Returns the mean loss over contributing pixels and their count;
/// a batch with no contributing pixel yields (0.0, 0).
pub fn contrast_loss_bruteforce(
    query: &[f64],
    q_labels: &[u8],
    d: usize,
    keys: &[(Vec<f64>, Vec<u8>)],
    ignore_id: u8,
    temperature: f64,
) -> (f64, usize) {
    let p = q_labels.len();
    assert_eq!(query.len(), p * d);
    let mut total = 0.0;
    let mut contributing = 0usize;
    for i in 0..p {
        let yi = q_labels[i];
        if yi == ignore_id {
            continue;
        }
        let qi = &query[i * d..(i + 1) * d];
        let mut pos_sum = 0.0;
        let mut pos_cnt = 0usize;
        let mut neg_total = 0.0;
        let mut any_neg = false;
        for (emb, labels) in keys {
            assert_eq!(emb.len(), labels.len() * d);
            let mut frame_neg_sum = 0.0;
            let mut frame_neg_cnt = 0usize;
            for (j, &yj) in labels.iter().enumerate() {
                if yj == ignore_id {
                    continue;
                }
                let mut dot = 0.0;
                for k in 0..d {
                    dot += qi[k] * emb[j * d + k];
                }
                if yj == yi {
                    pos_sum += dot;
                    pos_cnt += 1;
                } else {
                    frame_neg_sum += dot;
                    frame_neg_cnt += 1;
                }
            }
            // Negatives are normalized within each key frame, then the
            // per-frame means are summed.
            if frame_neg_cnt > 0 {
                neg_total += frame_neg_sum / frame_neg_cnt as f64;
                any_neg = true;
            }
        }
        if pos_cnt == 0 || !any_neg {
            continue;
        }
        let sp = pos_sum / pos_cnt as f64;
        let x = (neg_total - sp) / temperature;
        // -ln(e^{sp/t} / (e^{sp/t} + e^{sn/t})) = softplus((sn - sp)/t)
        total += x.max(0.0) + (-x.abs()).exp().ln_1p();
        contributing += 1;
    }
    if contributing == 0 {
        (0.0, 0)
    } else {
        (total / contributing as f64, contributing)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_logits_give_ln2() {
        // One positive and one negative with identical cosine -> sp == sn.
        let query = vec![1.0, 0.0];
        let q_labels = vec![0u8];
        let keys = vec![(vec![0.6, 0.8, 0.6, 0.8], vec![0u8, 1u8])];
        let (loss, n) = contrast_loss_bruteforce(&query, &q_labels, 2, &keys, 255, 1.0);
        assert_eq!(n, 1);
        assert!((loss - 2.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn closed_form_one_pos_one_neg() {
        // Positive at cosine 1, one negative frame at mean cosine -1.
        let query = vec![1.0, 0.0];
        let q_labels = vec![0u8];
        let keys = vec![(vec![1.0, 0.0, -1.0, 0.0], vec![0u8, 1u8])];
        let (loss, _) = contrast_loss_bruteforce(&query, &q_labels, 2, &keys, 255, 1.0);
        let expect = (1.0 + (-2.0f64).exp()).ln();
        assert!((loss - expect).abs() < 1e-12);
    }

    #[test]
    fn empty_batch_is_zero_with_no_contributors() {
        let query = vec![1.0, 0.0];
        let (loss, n) = contrast_loss_bruteforce(&query, &[255u8], 2, &[], 255, 1.0);
        assert_eq!((loss, n), (0.0, 0));
    }
}

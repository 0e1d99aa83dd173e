//! Pixel cross entropy with online hard example mining.

use crate::data::LabelMap;
use crate::tensor::Tensor;

pub struct CeLoss {
    pub value: Tensor,
    /// Labeled pixels before mining.
    pub labeled: usize,
    /// Pixels kept by OHEM.
    pub kept: usize,
    /// Set when there was nothing to supervise (loss is a constant zero).
    pub empty: bool,
}

/// Per-pixel CE over the labeled pixels, keeping only the `keep_fraction`
/// hardest (highest-loss) ones in the mean. `keep_fraction = 1` is exactly
/// plain mean CE. Ignore-class pixels are excluded before ranking.
pub fn ce_ohem_loss(logits: &Tensor, labels: &LabelMap, keep_fraction: f64, ignore: u8) -> CeLoss {
    assert!(keep_fraction > 0.0 && keep_fraction <= 1.0, "keep_fraction must be in (0, 1]");
    let (h, w, k) = (logits.shape()[0], logits.shape()[1], logits.shape()[2]);
    assert_eq!((h, w), (labels.h, labels.w), "logits {h}x{w} vs labels {}x{}", labels.h, labels.w);
    let n = h * w;
    let per_pixel = logits.reshape(&[n, k]).ce_per_pixel(&labels.data, ignore);

    let values = per_pixel.data();
    let mut labeled: Vec<usize> = (0..n).filter(|&i| labels.data[i] != ignore).collect();
    if labeled.is_empty() {
        return CeLoss { value: Tensor::scalar(0.0), labeled: 0, kept: 0, empty: true };
    }
    // Hardest first; ties broken by index so the selection is deterministic.
    labeled.sort_by(|&a, &b| {
        values[b].partial_cmp(&values[a]).unwrap().then(a.cmp(&b))
    });
    let keep = ((keep_fraction * labeled.len() as f64).ceil() as usize).clamp(1, labeled.len());
    let mut weights = vec![0.0; n];
    for &i in &labeled[..keep] {
        weights[i] = 1.0 / keep as f64;
    }
    let value = per_pixel.mul(&Tensor::from_vec(&[n], weights)).sum_all();
    CeLoss { value, labeled: labeled.len(), kept: keep, empty: false }
}

//! Segmentation evaluation protocols and the paired significance test.
//!
//! Two protocols coexist: per-frame scoring (IoU/Dice over the classes
//! present in each frame, background excluded, averaged over frames) and
//! dataset-level scoring from one pooled confusion matrix (pixel accuracy,
//! per-class accuracy, mIoU).

mod report;
mod wilcoxon;

pub use report::{MetricsReport, SequenceScore};
pub use wilcoxon::{wilcoxon_signed_rank, WilcoxonResult};

use crate::data::LabelMap;

/// Square confusion matrix over class ids; ignore pixels are skipped.
#[derive(Clone, Debug)]
pub struct ConfusionMatrix {
    pub k: usize,
    pub counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(k: usize) -> ConfusionMatrix {
        ConfusionMatrix { k, counts: vec![0; k * k] }
    }

    pub fn accumulate(&mut self, pred: &LabelMap, gt: &LabelMap, ignore: u8) {
        assert_eq!((pred.h, pred.w), (gt.h, gt.w), "prediction/gt shapes differ");
        for (p, g) in pred.data.iter().zip(&gt.data) {
            if *g == ignore {
                continue;
            }
            let (p, g) = (*p as usize, *g as usize);
            assert!(p < self.k && g < self.k, "class id out of range");
            self.counts[g * self.k + p] += 1;
        }
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        assert_eq!(self.k, other.k);
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    pub fn gt_total(&self, c: usize) -> u64 {
        (0..self.k).map(|p| self.counts[c * self.k + p]).sum()
    }

    pub fn pred_total(&self, c: usize) -> u64 {
        (0..self.k).map(|g| self.counts[g * self.k + c]).sum()
    }

    pub fn tp(&self, c: usize) -> u64 {
        self.counts[c * self.k + c]
    }
}

/// Per-frame score: IoU and Dice per class present in the ground truth
/// (background and ignore excluded), and their means.
#[derive(Clone, Debug)]
pub struct FrameScore {
    pub video: usize,
    pub frame: usize,
    /// (class, IoU, Dice) for every class present in the frame's gt.
    pub per_class: Vec<(u8, f64, f64)>,
    pub miou: f64,
    pub dice: f64,
    /// True when the frame had no countable class (gt all background) and is
    /// excluded from averages.
    pub skipped: bool,
}

/// Score one frame under the per-frame protocol: only classes present in
/// the ground truth count, the background class is excluded, ignore pixels
/// are dropped entirely.
pub fn frame_scores(pred: &LabelMap, gt: &LabelMap, background: u8, ignore: u8) -> FrameScore {
    assert_eq!((pred.h, pred.w), (gt.h, gt.w), "prediction/gt shapes differ");
    let mut present: Vec<u8> = gt
        .data
        .iter()
        .copied()
        .filter(|&c| c != background && c != ignore)
        .collect();
    present.sort_unstable();
    present.dedup();
    let mut per_class = Vec::with_capacity(present.len());
    for &c in &present {
        let mut tp = 0u64;
        let mut fp = 0u64;
        let mut fn_ = 0u64;
        for (p, g) in pred.data.iter().zip(&gt.data) {
            if *g == ignore {
                continue;
            }
            match (*p == c, *g == c) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
        let iou = tp as f64 / (tp + fp + fn_) as f64;
        let dice = 2.0 * tp as f64 / (2.0 * tp as f64 + fp as f64 + fn_ as f64);
        per_class.push((c, iou, dice));
    }
    if per_class.is_empty() {
        return FrameScore { video: 0, frame: 0, per_class, miou: 0.0, dice: 0.0, skipped: true };
    }
    let miou = per_class.iter().map(|(_, i, _)| i).sum::<f64>() / per_class.len() as f64;
    let dice = per_class.iter().map(|(_, _, d)| d).sum::<f64>() / per_class.len() as f64;
    FrameScore { video: 0, frame: 0, per_class, miou, dice, skipped: false }
}

/// Dataset-level protocol scores from one pooled confusion matrix.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DatasetScores {
    /// Overall pixel accuracy.
    pub pa: f64,
    /// Mean per-class pixel accuracy (recall), classes absent from gt excluded.
    pub pac: f64,
    /// Mean IoU over classes present in the ground truth.
    pub miou: f64,
}

pub fn dataset_scores(preds: &[&LabelMap], gts: &[&LabelMap], num_classes: usize, ignore: u8) -> DatasetScores {
    assert_eq!(preds.len(), gts.len(), "prediction/gt lists differ in length");
    let mut cm = ConfusionMatrix::new(num_classes);
    for (p, g) in preds.iter().zip(gts) {
        cm.accumulate(p, g, ignore);
    }
    scores_from_confusion(&cm)
}

pub fn scores_from_confusion(cm: &ConfusionMatrix) -> DatasetScores {
    let total: u64 = cm.counts.iter().sum();
    let trace: u64 = (0..cm.k).map(|c| cm.tp(c)).sum();
    let pa = if total > 0 { trace as f64 / total as f64 } else { 0.0 };
    let mut recalls = Vec::new();
    let mut ious = Vec::new();
    for c in 0..cm.k {
        let gt = cm.gt_total(c);
        if gt == 0 {
            continue;
        }
        let tp = cm.tp(c);
        recalls.push(tp as f64 / gt as f64);
        let union = gt + cm.pred_total(c) - tp;
        ious.push(tp as f64 / union as f64);
    }
    let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
    DatasetScores { pa, pac: mean(&recalls), miou: mean(&ious) }
}

//! Aggregated evaluation reports with JSON and CSV output.

use serde::{Deserialize, Serialize};

use super::{frame_scores, wilcoxon_signed_rank, DatasetScores, FrameScore, WilcoxonResult};
use crate::data::LabelMap;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SequenceScore {
    pub id: String,
    pub frames: usize,
    pub scored_frames: usize,
    pub miou: f64,
    pub dice: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FrameRow {
    pub sequence: String,
    pub frame: usize,
    pub miou: f64,
    pub dice: f64,
    pub skipped: bool,
}

/// Evaluation of one split: per-frame scores, per-sequence and overall
/// frame-averaged mIoU/Dice, plus the pooled-confusion protocol scores.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MetricsReport {
    pub sequences: Vec<SequenceScore>,
    pub frames: Vec<FrameRow>,
    /// Frame-averaged over all scored frames of all sequences.
    pub overall_miou: f64,
    pub overall_dice: f64,
    /// Dataset-level protocol (PA, PAC, global mIoU).
    pub dataset: DatasetScores,
    /// Per-class IoU from the pooled confusion matrix.
    pub class_iou: Vec<(u8, f64)>,
}

impl MetricsReport {
    pub fn build(
        ids: &[String],
        preds: &[Vec<LabelMap>],
        gts: &[Vec<LabelMap>],
        num_classes: usize,
        background: u8,
        ignore: u8,
    ) -> MetricsReport {
        assert_eq!(preds.len(), gts.len());
        assert_eq!(preds.len(), ids.len());
        let mut frames = Vec::new();
        let mut sequences = Vec::new();
        let mut sum_miou = 0.0;
        let mut sum_dice = 0.0;
        let mut scored = 0usize;
        let mut cm = super::ConfusionMatrix::new(num_classes);
        for ((id, vp), vg) in ids.iter().zip(preds).zip(gts) {
            assert_eq!(vp.len(), vg.len(), "sequence {id}: length mismatch");
            let mut seq_miou = 0.0;
            let mut seq_dice = 0.0;
            let mut seq_scored = 0usize;
            for (t, (p, g)) in vp.iter().zip(vg).enumerate() {
                cm.accumulate(p, g, ignore);
                let s: FrameScore = frame_scores(p, g, background, ignore);
                if !s.skipped {
                    seq_miou += s.miou;
                    seq_dice += s.dice;
                    seq_scored += 1;
                    sum_miou += s.miou;
                    sum_dice += s.dice;
                    scored += 1;
                }
                frames.push(FrameRow { sequence: id.clone(), frame: t, miou: s.miou, dice: s.dice, skipped: s.skipped });
            }
            let denom = seq_scored.max(1) as f64;
            sequences.push(SequenceScore {
                id: id.clone(),
                frames: vp.len(),
                scored_frames: seq_scored,
                miou: seq_miou / denom,
                dice: seq_dice / denom,
            });
        }
        let denom = scored.max(1) as f64;
        let class_iou = (0..num_classes as u8)
            .filter(|&c| cm.gt_total(c as usize) > 0)
            .map(|c| {
                let c_us = c as usize;
                let tp = cm.tp(c_us);
                let union = cm.gt_total(c_us) + cm.pred_total(c_us) - tp;
                (c, tp as f64 / union as f64)
            })
            .collect();
        MetricsReport {
            sequences,
            frames,
            overall_miou: sum_miou / denom,
            overall_dice: sum_dice / denom,
            dataset: super::scores_from_confusion(&cm),
            class_iou,
        }
    }

    /// Per-frame mIoU list in frame order, skipped frames excluded. Used for
    /// paired significance tests between runs on the same split.
    pub fn frame_miou_series(&self) -> Vec<f64> {
        self.frames.iter().filter(|f| !f.skipped).map(|f| f.miou).collect()
    }

    /// Paired Wilcoxon signed-rank test of this run against another on the
    /// same frames.
    pub fn compare(&self, other: &MetricsReport) -> WilcoxonResult {
        wilcoxon_signed_rank(&self.frame_miou_series(), &other.frame_miou_series())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One row per frame, one summary row per sequence, one overall row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("kind,sequence,frame,miou,dice,pa,pac,global_miou\n");
        for f in &self.frames {
            if f.skipped {
                continue;
            }
            out.push_str(&format!("frame,{},{},{:.6},{:.6},,,\n", f.sequence, f.frame, f.miou, f.dice));
        }
        for s in &self.sequences {
            out.push_str(&format!("sequence,{},,{:.6},{:.6},,,\n", s.id, s.miou, s.dice));
        }
        out.push_str(&format!(
            "overall,,,{:.6},{:.6},{:.6},{:.6},{:.6}\n",
            self.overall_miou, self.overall_dice, self.dataset.pa, self.dataset.pac, self.dataset.miou
        ));
        out
    }
}

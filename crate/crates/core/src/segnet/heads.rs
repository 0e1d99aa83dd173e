//! Output heads: dense classification and the contrastive projection.

use rand::Rng;

use crate::tensor::Tensor;

/// Segmentation head: bilinear upsample to full resolution, then a 3x3 conv,
/// ReLU, and a 1x1 conv to class logits.
pub struct SegHead {
    pub k3: Tensor,
    pub b3: Tensor,
    pub k1: Tensor,
    pub b1: Tensor,
    pub factor: usize,
}

impl SegHead {
    pub fn new<R: Rng>(d_tr: usize, hidden: usize, num_classes: usize, factor: usize, rng: &mut R) -> SegHead {
        let std3 = (2.0 / (9 * d_tr) as f64).sqrt();
        SegHead {
            k3: Tensor::randn(&[3, 3, d_tr, hidden], std3, rng),
            b3: Tensor::zeros(&[hidden]),
            // Near-uniform logits at initialisation: the first CE steps are
            // spent separating classes instead of undoing confident noise.
            k1: Tensor::randn(&[1, 1, hidden, num_classes], 0.01, rng),
            b1: Tensor::zeros(&[num_classes]),
            factor,
        }
    }

    /// [h,w,D_Tr] at stride S -> [H,W,num_classes] logits.
    pub fn forward(&self, z: &Tensor) -> Tensor {
        z.bilinear_upsample(self.factor)
            .conv2d(&self.k3, 1, 1)
            .add_bias(&self.b3)
            .relu()
            .conv2d(&self.k1, 1, 0)
            .add_bias(&self.b1)
    }

    pub fn visit_params(&self, prefix: &str, out: &mut Vec<(String, Tensor)>) {
        out.push((format!("{prefix}.k3"), self.k3.clone()));
        out.push((format!("{prefix}.b3"), self.b3.clone()));
        out.push((format!("{prefix}.k1"), self.k1.clone()));
        out.push((format!("{prefix}.b1"), self.b1.clone()));
    }
}

/// Projection head: two 1x1 convolutions (token-wise linears) down to the
/// contrast dimension, followed by per-pixel L2 normalization.
pub struct ProjHead {
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

impl ProjHead {
    pub fn new<R: Rng>(d_tr: usize, d_cl: usize, rng: &mut R) -> ProjHead {
        let mid = (d_tr / 2).max(d_cl);
        let x1 = (6.0 / (d_tr + mid) as f64).sqrt();
        let x2 = (6.0 / (mid + d_cl) as f64).sqrt();
        ProjHead {
            w1: Tensor::uniform(&[d_tr, mid], -x1, x1, rng),
            b1: Tensor::zeros(&[mid]),
            w2: Tensor::uniform(&[mid, d_cl], -x2, x2, rng),
            b2: Tensor::zeros(&[d_cl]),
        }
    }

    /// [h,w,D_Tr] -> unit-norm [h*w, D_cl] embeddings.
    pub fn forward(&self, z: &Tensor) -> Tensor {
        let (h, w, c) = (z.shape()[0], z.shape()[1], z.shape()[2]);
        z.reshape(&[h * w, c])
            .matmul(&self.w1)
            .add_bias(&self.b1)
            .relu()
            .matmul(&self.w2)
            .add_bias(&self.b2)
            .l2_normalize_rows(1e-12)
    }

    pub fn visit_params(&self, prefix: &str, out: &mut Vec<(String, Tensor)>) {
        out.push((format!("{prefix}.w1"), self.w1.clone()));
        out.push((format!("{prefix}.b1"), self.b1.clone()));
        out.push((format!("{prefix}.w2"), self.w2.clone()));
        out.push((format!("{prefix}.b2"), self.b2.clone()));
    }
}

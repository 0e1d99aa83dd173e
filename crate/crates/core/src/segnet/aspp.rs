//! Multi-scale fusion: parallel dilated convolutions and a global-average
//! branch on the deep map, upsampled and concatenated with the stride-S map,
//! then projected.

use rand::Rng;

use crate::tensor::Tensor;

pub struct DilatedBranch {
    pub kernel: Tensor,
    pub bias: Tensor,
    pub rate: usize,
}

pub struct AsppFuse {
    pub branches: Vec<DilatedBranch>,
    pub global_w: Tensor,
    pub global_b: Tensor,
    pub fuse_w: Tensor,
    pub fuse_b: Tensor,
    pub proj_w: Tensor,
    pub proj_b: Tensor,
    pub branch_channels: usize,
}

impl AsppFuse {
    /// `deep_channels` is the channel count of the stride-2S map, `skip` the
    /// stride-S map's, `out` the fused width D_Tr.
    pub fn new<R: Rng>(deep_channels: usize, skip: usize, out: usize, rates: &[usize], rng: &mut R) -> AsppFuse {
        assert!(!rates.is_empty(), "need at least one dilation rate");
        let bc = (out / 4).max(4);
        let mid = (out / 2).max(8);
        let std = (2.0 / (9 * deep_channels) as f64).sqrt();
        let branches = rates
            .iter()
            .map(|&rate| DilatedBranch {
                kernel: Tensor::randn(&[3, 3, deep_channels, bc], std, rng),
                bias: Tensor::zeros(&[bc]),
                rate,
            })
            .collect();
        let xg = (6.0 / (deep_channels + bc) as f64).sqrt();
        let cat = bc * (rates.len() + 1);
        let xf = (6.0 / (cat + mid) as f64).sqrt();
        let xp = (6.0 / (mid + skip + out) as f64).sqrt();
        AsppFuse {
            branches,
            global_w: Tensor::uniform(&[deep_channels, bc], -xg, xg, rng),
            global_b: Tensor::zeros(&[bc]),
            fuse_w: Tensor::uniform(&[cat, mid], -xf, xf, rng),
            fuse_b: Tensor::zeros(&[mid]),
            proj_w: Tensor::uniform(&[mid + skip, out], -xp, xp, rng),
            proj_b: Tensor::zeros(&[out]),
            branch_channels: bc,
        }
    }

    /// `low` at stride S ([h,w,Cs]), `deep` at stride 2S ([h/2,w/2,Cd]);
    /// output [h,w,out].
    pub fn forward(&self, low: &Tensor, deep: &Tensor) -> Tensor {
        let (h, w, skip_c) = (low.shape()[0], low.shape()[1], low.shape()[2]);
        let (h2, w2, _) = (deep.shape()[0], deep.shape()[1], deep.shape()[2]);
        assert_eq!((h2 * 2, w2 * 2), (h, w), "deep map must be at half the skip resolution");
        let mut outs = Vec::with_capacity(self.branches.len() + 1);
        for b in &self.branches {
            let y = deep
                .conv2d_dilated(&b.kernel, 1, b.rate, b.rate)
                .add_bias(&b.bias)
                .relu();
            outs.push(y.reshape(&[h2 * w2, self.branch_channels]));
        }
        // Global-average branch: pooled descriptor, projected, broadcast back.
        let deep_flat = deep.reshape(&[h2 * w2, deep.shape()[2]]);
        let pool_weights = Tensor::full(&[1, h2 * w2], 1.0 / (h2 * w2) as f64);
        let pooled = pool_weights.matmul(&deep_flat); // [1, Cd]
        let g = pooled.matmul(&self.global_w).add_bias(&self.global_b).relu();
        outs.push(g.gather_rows(&vec![0; h2 * w2]));

        let refs: Vec<&Tensor> = outs.iter().collect();
        let mid = self.fuse_w.shape()[1];
        let fused = Tensor::concat_lastdim(&refs)
            .matmul(&self.fuse_w)
            .add_bias(&self.fuse_b)
            .relu()
            .reshape(&[h2, w2, mid])
            .bilinear_upsample(2);

        let cat = Tensor::concat_lastdim(&[&fused.reshape(&[h * w, mid]), &low.reshape(&[h * w, skip_c])]);
        let out = self.proj_w.shape()[1];
        cat.matmul(&self.proj_w).add_bias(&self.proj_b).reshape(&[h, w, out])
    }

    pub fn visit_params(&self, prefix: &str, out: &mut Vec<(String, Tensor)>) {
        for (i, b) in self.branches.iter().enumerate() {
            out.push((format!("{prefix}.rate{}.kernel", b.rate), b.kernel.clone()));
            out.push((format!("{prefix}.rate{}.bias", b.rate), b.bias.clone()));
            let _ = i;
        }
        out.push((format!("{prefix}.global_w"), self.global_w.clone()));
        out.push((format!("{prefix}.global_b"), self.global_b.clone()));
        out.push((format!("{prefix}.fuse_w"), self.fuse_w.clone()));
        out.push((format!("{prefix}.fuse_b"), self.fuse_b.clone()));
        out.push((format!("{prefix}.proj_w"), self.proj_w.clone()));
        out.push((format!("{prefix}.proj_b"), self.proj_b.clone()));
    }
}

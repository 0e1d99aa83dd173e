//! Feature merging: concatenate 2x2 neighbouring tokens and project.

use rand::Rng;

use crate::tensor::Tensor;

pub struct FeatureMerging {
    /// [4C, 2C]
    pub proj: Tensor,
    pub bias: Tensor,
}

impl FeatureMerging {
    pub fn new<R: Rng>(channels: usize, rng: &mut R) -> FeatureMerging {
        let (cin, cout) = (4 * channels, 2 * channels);
        let x = (6.0 / (cin + cout) as f64).sqrt();
        FeatureMerging {
            proj: Tensor::uniform(&[cin, cout], -x, x, rng),
            bias: Tensor::zeros(&[cout]),
        }
    }

    /// [h,w,C] -> [h/2, w/2, 2C]; h and w must be even.
    pub fn forward(&self, f: &Tensor) -> Tensor {
        assert_eq!(f.rank(), 3, "feature_merging needs [h,w,C]");
        let (h, w, c) = (f.shape()[0], f.shape()[1], f.shape()[2]);
        assert!(h % 2 == 0 && w % 2 == 0, "feature_merging: {h}x{w} must be even");
        let flat = f.reshape(&[h * w, c]);
        let (ho, wo) = (h / 2, w / 2);
        // Gather the four corners of each 2x2 neighbourhood in fixed order.
        let mut corners = Vec::with_capacity(4);
        for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            let mut idx = Vec::with_capacity(ho * wo);
            for y in 0..ho {
                for x in 0..wo {
                    idx.push((2 * y + dy) * w + (2 * x + dx));
                }
            }
            corners.push(flat.gather_rows(&idx));
        }
        let refs: Vec<&Tensor> = corners.iter().collect();
        Tensor::concat_lastdim(&refs)
            .matmul(&self.proj)
            .add_bias(&self.bias)
            .reshape(&[ho, wo, 2 * c])
    }

    pub fn visit_params(&self, prefix: &str, out: &mut Vec<(String, Tensor)>) {
        out.push((format!("{prefix}.proj"), self.proj.clone()));
        out.push((format!("{prefix}.bias"), self.bias.clone()));
    }
}

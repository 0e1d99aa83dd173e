//! The consecutive regular/shifted Transformer block.
//!
//! One block applies, to one or two same-shape frames:
//!   x1 = attn_regular(LN(x)) + x
//!   x2 = mlp(LN(x1)) + x1
//!   x3 = attn_shifted(LN(x2)) + x2      (cyclic roll by -(M/2, M/2) + mask)
//!   x4 = mlp(LN(x3)) + x3
//! Both timesteps share one joint window per spatial location and are
//! updated symmetrically. Maps whose sides are not multiples of M are
//! zero-padded; padded tokens are masked out of attention as keys and
//! stripped again on the way out.

use rand::Rng;

use super::{
    region_grid, window_masks, window_partition, window_reverse, windowed_mhsa, AttentionWeights,
    BlockConfig,
};
use crate::tensor::Tensor;

pub struct LayerNorm {
    pub gain: Tensor,
    pub bias: Tensor,
    pub eps: f64,
}

impl LayerNorm {
    pub fn new(channels: usize) -> LayerNorm {
        LayerNorm { gain: Tensor::ones(&[channels]), bias: Tensor::zeros(&[channels]), eps: 1e-5 }
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        x.layer_norm(&self.gain, &self.bias, self.eps)
    }

    pub fn visit_params(&self, prefix: &str, out: &mut Vec<(String, Tensor)>) {
        out.push((format!("{prefix}.gain"), self.gain.clone()));
        out.push((format!("{prefix}.bias"), self.bias.clone()));
    }
}

pub struct Mlp {
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

impl Mlp {
    pub fn new<R: Rng>(channels: usize, hidden: usize, rng: &mut R) -> Mlp {
        let x1 = (6.0 / (channels + hidden) as f64).sqrt();
        Mlp {
            w1: Tensor::uniform(&[channels, hidden], -x1, x1, rng),
            b1: Tensor::zeros(&[hidden]),
            // Residual-branch output at reduced scale, as for the attention
            // output projection.
            w2: Tensor::uniform(&[hidden, channels], -0.1 * x1, 0.1 * x1, rng),
            b2: Tensor::zeros(&[channels]),
        }
    }

    /// Token-wise two-layer MLP with GELU on an [h,w,C] map.
    pub fn forward(&self, x: &Tensor) -> Tensor {
        let (h, w, c) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        x.reshape(&[h * w, c])
            .matmul(&self.w1)
            .add_bias(&self.b1)
            .gelu()
            .matmul(&self.w2)
            .add_bias(&self.b2)
            .reshape(&[h, w, c])
    }

    pub fn visit_params(&self, prefix: &str, out: &mut Vec<(String, Tensor)>) {
        out.push((format!("{prefix}.w1"), self.w1.clone()));
        out.push((format!("{prefix}.b1"), self.b1.clone()));
        out.push((format!("{prefix}.w2"), self.w2.clone()));
        out.push((format!("{prefix}.b2"), self.b2.clone()));
    }
}

pub struct StswinBlock {
    pub cfg: BlockConfig,
    pub ln1: LayerNorm,
    pub attn_regular: AttentionWeights,
    pub ln2: LayerNorm,
    pub mlp1: Mlp,
    pub ln3: LayerNorm,
    pub attn_shifted: AttentionWeights,
    pub ln4: LayerNorm,
    pub mlp2: Mlp,
}

impl StswinBlock {
    pub fn new<R: Rng>(cfg: &BlockConfig, rng: &mut R) -> StswinBlock {
        cfg.validate();
        let c = cfg.channels;
        let hidden = cfg.mlp_hidden();
        StswinBlock {
            cfg: cfg.clone(),
            ln1: LayerNorm::new(c),
            attn_regular: AttentionWeights::new(cfg, 2, rng),
            ln2: LayerNorm::new(c),
            mlp1: Mlp::new(c, hidden, rng),
            ln3: LayerNorm::new(c),
            attn_shifted: AttentionWeights::new(cfg, 2, rng),
            ln4: LayerNorm::new(c),
            mlp2: Mlp::new(c, hidden, rng),
        }
    }

    pub fn visit_params(&self, prefix: &str, out: &mut Vec<(String, Tensor)>) {
        self.ln1.visit_params(&format!("{prefix}.ln1"), out);
        self.attn_regular.visit_params(&format!("{prefix}.attn_r"), out);
        self.ln2.visit_params(&format!("{prefix}.ln2"), out);
        self.mlp1.visit_params(&format!("{prefix}.mlp1"), out);
        self.ln3.visit_params(&format!("{prefix}.ln3"), out);
        self.attn_shifted.visit_params(&format!("{prefix}.attn_s"), out);
        self.ln4.visit_params(&format!("{prefix}.ln4"), out);
        self.mlp2.visit_params(&format!("{prefix}.mlp2"), out);
    }

    /// Apply the block to one or two frames (earlier timestep first). Frames
    /// must share a shape; the output preserves it.
    pub fn forward(&self, frames: &[&Tensor]) -> Vec<Tensor> {
        assert!(matches!(frames.len(), 1 | 2), "a block takes 1 or 2 timesteps");
        let shape = frames[0].shape().to_vec();
        for f in frames {
            assert_eq!(f.shape(), &shape[..], "frames in a block must share a shape");
        }
        let (h, w) = (shape[0], shape[1]);
        let m = self.cfg.window;
        let hp = h.div_ceil(m) * m;
        let wp = w.div_ceil(m) * m;
        let padded = hp != h || wp != w;

        let mut cur: Vec<Tensor> = frames
            .iter()
            .map(|f| f.pad_bottom_right(hp - h, wp - w))
            .collect();

        let valid: Option<Vec<bool>> = padded.then(|| {
            let mut v = vec![false; hp * wp];
            for y in 0..h {
                for x in 0..w {
                    v[y * wp + x] = true;
                }
            }
            v
        });

        // Regular windows.
        cur = self.attention_sublayer(&cur, hp, wp, false, valid.as_deref(), &self.ln1, &self.attn_regular);
        cur = cur.iter().map(|f| self.mlp1.forward(&self.ln2.forward(f)).add(f)).collect();
        // Space-shifted windows.
        cur = self.attention_sublayer(&cur, hp, wp, true, valid.as_deref(), &self.ln3, &self.attn_shifted);
        cur = cur.iter().map(|f| self.mlp2.forward(&self.ln4.forward(f)).add(f)).collect();

        cur.into_iter().map(|f| f.crop2d(h, w)).collect()
    }

    #[allow(clippy::too_many_arguments)]
    fn attention_sublayer(
        &self,
        frames: &[Tensor],
        hp: usize,
        wp: usize,
        shifted: bool,
        valid: Option<&[bool]>,
        ln: &LayerNorm,
        attn: &AttentionWeights,
    ) -> Vec<Tensor> {
        let m = self.cfg.window;
        let s = (m / 2) as isize;
        let do_shift = shifted && s > 0;

        let normed: Vec<Tensor> = frames
            .iter()
            .map(|f| {
                let n = ln.forward(f);
                if do_shift {
                    n.roll2d(-s, -s)
                } else {
                    n
                }
            })
            .collect();

        // Validity travels with the rolled content.
        let rolled_valid: Option<Vec<bool>> = match (valid, do_shift) {
            (Some(v), true) => {
                let su = s as usize;
                let mut rv = vec![false; hp * wp];
                for y in 0..hp {
                    for x in 0..wp {
                        rv[y * wp + x] = v[((y + su) % hp) * wp + (x + su) % wp];
                    }
                }
                Some(rv)
            }
            (Some(v), false) => Some(v.to_vec()),
            (None, _) => None,
        };

        let regions = do_shift.then(|| region_grid(hp, wp, m));
        let masks = window_masks(hp, wp, m, frames.len(), regions.as_deref(), rolled_valid.as_deref());

        let refs: Vec<&Tensor> = normed.iter().collect();
        let mut ws = window_partition(&refs, m);
        ws.shifted = do_shift;
        let out = windowed_mhsa(&ws, attn, masks.as_deref());
        let reversed = window_reverse(&out, hp, wp);

        reversed
            .into_iter()
            .zip(frames)
            .map(|(o, f)| {
                let o = if do_shift { o.roll2d(s, s) } else { o };
                o.add(f)
            })
            .collect()
    }
}

/// One shifted-window attention pass in isolation (LN and residual omitted):
/// roll, partition, masked attention, reverse, unroll. This is the unit the
/// shifted-window equivalence oracle checks against.
pub fn shifted_window_attention(frames: &[&Tensor], attn: &AttentionWeights) -> Vec<Tensor> {
    let (h, w) = (frames[0].shape()[0], frames[0].shape()[1]);
    let m = attn.window;
    assert!(h % m == 0 && w % m == 0, "shifted_window_attention: pad first");
    let s = (m / 2) as isize;
    let rolled: Vec<Tensor> = frames.iter().map(|f| f.roll2d(-s, -s)).collect();
    let refs: Vec<&Tensor> = rolled.iter().collect();
    let mut ws = window_partition(&refs, m);
    ws.shifted = s > 0;
    let masks = if s > 0 { Some(super::make_shift_mask(h, w, m, frames.len())) } else { None };
    let out = windowed_mhsa(&ws, attn, masks.as_deref());
    window_reverse(&out, h, w).into_iter().map(|f| f.roll2d(s, s)).collect()
}

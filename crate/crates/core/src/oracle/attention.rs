//! Dense attention references: straightforward per-token evaluation, and the
//! shifted-window equivalence oracle that attends over explicit variable-size
//! sub-windows of the unrolled map instead of using the cyclic-shift trick.

/// Raw projection weights for the reference attention. All matrices are
/// row-major [C,C]; the optional bias table is [t_extent*(2m-1)^2, heads].
pub struct AttentionRef<'a> {
    pub wq: &'a [f64],
    pub bq: &'a [f64],
    pub wk: &'a [f64],
    pub bk: &'a [f64],
    pub wv: &'a [f64],
    pub bv: &'a [f64],
    pub wo: &'a [f64],
    pub bo: &'a [f64],
    pub rel_bias: Option<&'a [f64]>,
    pub channels: usize,
    pub num_heads: usize,
    pub window: usize,
}

impl AttentionRef<'_> {
    fn bias_at(&self, head: usize, qi: (i64, i64, i64), kj: (i64, i64, i64)) -> f64 {
        let Some(table) = self.rel_bias else { return 0.0 };
        let m = self.window as i64;
        let dt = (qi.0 - kj.0).unsigned_abs() as usize;
        let dy = qi.1 - kj.1 + (m - 1);
        let dx = qi.2 - kj.2 + (m - 1);
        debug_assert!(dy >= 0 && dy < 2 * m - 1 && dx >= 0 && dx < 2 * m - 1);
        let span = (2 * m - 1) * (2 * m - 1);
        let idx = dt * span as usize + (dy * (2 * m - 1) + dx) as usize;
        table[idx * self.num_heads + head]
    }
}

fn project(tokens: &[f64], n: usize, c: usize, w: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; n * c];
    for i in 0..n {
        for j in 0..c {
            let mut acc = b[j];
            for k in 0..c {
                acc += tokens[i * c + k] * w[k * c + j];
            }
            out[i * c + j] = acc;
        }
    }
    out
}

/// Multi-head scaled dot-product attention over one group of tokens.
/// `coords` gives each token's (t, y, x) for relative-position bias lookup;
/// `mask` is an optional n*n additive matrix.
pub fn dense_attention(
    tokens: &[f64],
    coords: &[(i64, i64, i64)],
    w: &AttentionRef,
    mask: Option<&[f64]>,
) -> Vec<f64> {
    let c = w.channels;
    let n = coords.len();
    assert_eq!(tokens.len(), n * c);
    assert_eq!(c % w.num_heads, 0);
    let d = c / w.num_heads;
    let scale = 1.0 / (d as f64).sqrt();
    let q = project(tokens, n, c, w.wq, w.bq);
    let k = project(tokens, n, c, w.wk, w.bk);
    let v = project(tokens, n, c, w.wv, w.bv);
    let mut heads_out = vec![0.0; n * c];
    for h in 0..w.num_heads {
        let off = h * d;
        for i in 0..n {
            // Logits with scale, bias, mask; softmax with max subtraction.
            let mut logits = vec![0.0; n];
            for j in 0..n {
                let mut dot = 0.0;
                for dd in 0..d {
                    dot += q[i * c + off + dd] * k[j * c + off + dd];
                }
                let mut l = dot * scale + w.bias_at(h, coords[i], coords[j]);
                if let Some(mk) = mask {
                    l += mk[i * n + j];
                }
                logits[j] = l;
            }
            let mx = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for l in logits.iter_mut() {
                *l = (*l - mx).exp();
                z += *l;
            }
            for dd in 0..d {
                let mut acc = 0.0;
                for j in 0..n {
                    acc += logits[j] / z * v[j * c + off + dd];
                }
                heads_out[i * c + off + dd] = acc;
            }
        }
    }
    project(&heads_out, n, c, w.wo, w.bo)
}

/// Band cut points along one axis for a shifted partition of extent `n` with
/// window `m`: bands of size s, m, m, ..., m-s where s = m/2.
fn band_cuts(n: usize, m: usize) -> Vec<usize> {
    let s = m / 2;
    let mut cuts = vec![0];
    if s == 0 {
        let mut p = m;
        while p < n {
            cuts.push(p);
            p += m;
        }
    } else {
        let mut p = s;
        while p < n {
            cuts.push(p);
            p += m;
        }
    }
    cuts.push(n);
    cuts
}

/// Shifted-window attention computed the slow, explicit way: partition the
/// unrolled map into variable-size sub-windows at the shifted boundaries and
/// run dense attention within each rectangle, jointly over all timesteps.
/// Returns one output map per input frame.
pub fn shifted_window_attention_naive(
    frames: &[&[f64]],
    h: usize,
    w_dim: usize,
    w: &AttentionRef,
) -> Vec<Vec<f64>> {
    let c = w.channels;
    let t_count = frames.len();
    for f in frames {
        assert_eq!(f.len(), h * w_dim * c);
    }
    let mut outs = vec![vec![0.0; h * w_dim * c]; t_count];
    let row_cuts = band_cuts(h, w.window);
    let col_cuts = band_cuts(w_dim, w.window);
    for rb in row_cuts.windows(2) {
        for cb in col_cuts.windows(2) {
            let mut tokens = Vec::new();
            let mut coords = Vec::new();
            let mut back = Vec::new();
            for (t, frame) in frames.iter().enumerate() {
                for y in rb[0]..rb[1] {
                    for x in cb[0]..cb[1] {
                        tokens.extend_from_slice(&frame[(y * w_dim + x) * c..(y * w_dim + x + 1) * c]);
                        coords.push((t as i64, y as i64, x as i64));
                        back.push((t, y, x));
                    }
                }
            }
            let out = dense_attention(&tokens, &coords, w, None);
            for (idx, (t, y, x)) in back.iter().enumerate() {
                outs[*t][(y * w_dim + x) * c..(y * w_dim + x + 1) * c]
                    .copy_from_slice(&out[idx * c..(idx + 1) * c]);
            }
        }
    }
    outs
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_cuts_shifted_layout() {
        // h=4, m=2: bands {0}, {1,2}, {3} -> cuts 0,1,3,4
        assert_eq!(band_cuts(4, 2), vec![0, 1, 3, 4]);
        // m=1 degenerates to unit windows.
        assert_eq!(band_cuts(3, 1), vec![0, 1, 2, 3]);
        assert_eq!(band_cuts(8, 4), vec![0, 2, 6, 8]);
    }

    #[test]
    fn single_token_attention_is_value_projection() {
        let c = 4;
        let eye: Vec<f64> = (0..c * c).map(|i| if i % (c + 1) == 0 { 1.0 } else { 0.0 }).collect();
        let zeros = vec![0.0; c * c];
        let zb = vec![0.0; c];
        let w = AttentionRef {
            wq: &zeros,
            bq: &zb,
            wk: &zeros,
            bk: &zb,
            wv: &eye,
            bv: &zb,
            wo: &eye,
            bo: &zb,
            rel_bias: None,
            channels: c,
            num_heads: 2,
            window: 1,
        };
        let tokens = vec![0.5, -1.0, 2.0, 0.25];
        let out = dense_attention(&tokens, &[(0, 0, 0)], &w, None);
        assert_eq!(out, tokens);
    }
}

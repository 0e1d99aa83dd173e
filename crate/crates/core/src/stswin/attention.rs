//! Multi-head self-attention within windows.

use rand::Rng;

use super::{BlockConfig, Window, WindowSet};
use crate::tensor::Tensor;

/// Learnable projections for one attention layer, shared across both
/// timesteps of a window. The relative position bias table has one row per
/// (|dt|, dy, dx) offset and one column per head.
pub struct AttentionWeights {
    pub wq: Tensor,
    pub bq: Tensor,
    pub wk: Tensor,
    pub bk: Tensor,
    pub wv: Tensor,
    pub bv: Tensor,
    pub wo: Tensor,
    pub bo: Tensor,
    pub rel_bias: Option<Tensor>,
    pub num_heads: usize,
    pub window: usize,
    /// Temporal extent the bias table covers (1 or 2 timesteps).
    pub t_extent: usize,
}

impl AttentionWeights {
    pub fn new<R: Rng>(cfg: &BlockConfig, t_extent: usize, rng: &mut R) -> AttentionWeights {
        let c = cfg.channels;
        let m = cfg.window;
        let xavier = (6.0 / (c + c) as f64).sqrt();
        let mut proj = || Tensor::uniform(&[c, c], -xavier, xavier, rng);
        let wq = proj();
        let wk = proj();
        let wv = proj();
        // Small-scale output projection keeps deep residual stacks close to
        // identity at initialisation, which stabilises short training runs.
        let wo = Tensor::uniform(&[c, c], -0.1 * xavier, 0.1 * xavier, rng);
        let rel_bias = cfg.use_relative_position_bias.then(|| {
            let rows = t_extent * (2 * m - 1) * (2 * m - 1);
            Tensor::randn(&[rows, cfg.num_heads], 0.02, rng)
        });
        AttentionWeights {
            wq,
            bq: Tensor::zeros(&[c]),
            wk,
            bk: Tensor::zeros(&[c]),
            wv,
            bv: Tensor::zeros(&[c]),
            wo,
            bo: Tensor::zeros(&[c]),
            rel_bias,
            num_heads: cfg.num_heads,
            window: m,
            t_extent,
        }
    }

    pub fn channels(&self) -> usize {
        self.wq.shape()[0]
    }

    pub fn visit_params(&self, prefix: &str, out: &mut Vec<(String, Tensor)>) {
        let mut push = |name: &str, t: &Tensor| out.push((format!("{prefix}.{name}"), t.clone()));
        push("wq", &self.wq);
        push("bq", &self.bq);
        push("wk", &self.wk);
        push("bk", &self.bk);
        push("wv", &self.wv);
        push("bv", &self.bv);
        push("wo", &self.wo);
        push("bo", &self.bo);
        if let Some(rb) = &self.rel_bias {
            push("rel_bias", rb);
        }
    }

    /// Bias table row for a (|dt|, dy, dx) offset, with dy, dx in
    /// [-(M-1), M-1].
    fn bias_index(&self, dt: usize, dy: isize, dx: isize) -> usize {
        let m = self.window as isize;
        let span = (2 * m - 1) as usize;
        let row = (dy + m - 1) as usize * span + (dx + m - 1) as usize;
        dt * span * span + row
    }

    /// Per-head bias matrices [n, n] for a window layout of `timesteps`
    /// frames of M x M tokens. The layout is identical for every window, so
    /// this is computed once per window set.
    fn bias_matrices(&self, timesteps: usize) -> Option<Vec<Tensor>> {
        let table = self.rel_bias.as_ref()?;
        assert!(
            timesteps <= self.t_extent,
            "bias table covers {} timesteps, window has {timesteps}",
            self.t_extent
        );
        let m = self.window;
        let spatial = m * m;
        let n = timesteps * spatial;
        let mut idx = Vec::with_capacity(n * n);
        for i in 0..n {
            let (ti, yi, xi) = (i / spatial, (i % spatial) / m, i % m);
            for j in 0..n {
                let (tj, yj, xj) = (j / spatial, (j % spatial) / m, j % m);
                let dt = ti.abs_diff(tj);
                idx.push(self.bias_index(dt, yi as isize - yj as isize, xi as isize - xj as isize));
            }
        }
        let gathered = table.gather_rows(&idx); // [n*n, heads]
        let per_head = (0..self.num_heads)
            .map(|h| gathered.slice_cols(h, 1).reshape(&[n, n]))
            .collect();
        Some(per_head)
    }
}

/// Scaled dot-product multi-head attention within each window. `masks`, when
/// given, supplies one additive [n,n] matrix per window in the set's order.
pub fn windowed_mhsa(ws: &WindowSet, w: &AttentionWeights, masks: Option<&[Tensor]>) -> WindowSet {
    let c = w.channels();
    assert_eq!(
        ws.windows[0].tokens.shape()[1],
        c,
        "window channels do not match attention weights"
    );
    if let Some(ms) = masks {
        assert_eq!(ms.len(), ws.windows.len(), "one mask per window required");
    }
    let n = ws.tokens_per_window();
    let heads = w.num_heads;
    let d = c / heads;
    let scale = 1.0 / (d as f64).sqrt();
    let bias = w.bias_matrices(ws.timesteps);

    // Project q/k/v/output over all windows at once; attention itself is per
    // window and per head.
    let all_refs: Vec<&Tensor> = ws.windows.iter().map(|win| &win.tokens).collect();
    let stacked = Tensor::concat_rows(&all_refs);
    let q_all = stacked.matmul(&w.wq).add_bias(&w.bq);
    let k_all = stacked.matmul(&w.wk).add_bias(&w.bk);
    let v_all = stacked.matmul(&w.wv).add_bias(&w.bv);

    let mut out_windows = Vec::with_capacity(ws.windows.len());
    for (wi, win) in ws.windows.iter().enumerate() {
        let q = q_all.slice_rows(wi * n, n);
        let k = k_all.slice_rows(wi * n, n);
        let v = v_all.slice_rows(wi * n, n);
        let mut head_outs = Vec::with_capacity(heads);
        for h in 0..heads {
            let qh = q.slice_cols(h * d, d);
            let kh = k.slice_cols(h * d, d);
            let vh = v.slice_cols(h * d, d);
            let mut logits = qh.matmul_nt(&kh).mul_scalar(scale);
            if let Some(bs) = &bias {
                logits = logits.add(&bs[h]);
            }
            if let Some(ms) = masks {
                logits = logits.add(&ms[wi]);
            }
            head_outs.push(logits.softmax_lastdim().matmul(&vh));
        }
        let head_refs: Vec<&Tensor> = head_outs.iter().collect();
        let merged = Tensor::concat_lastdim(&head_refs);
        let projected = merged.matmul(&w.wo).add_bias(&w.bo);
        out_windows.push(Window { tokens: projected, row: win.row, col: win.col });
    }
    WindowSet {
        windows: out_windows,
        m: ws.m,
        timesteps: ws.timesteps,
        grid: ws.grid,
        shifted: ws.shifted,
    }
}

//! Window partitioning and its exact inverse.

use crate::tensor::Tensor;

/// One window of tokens with its origin in the window grid.
pub struct Window {
    /// [T*M*M, C]; tokens of the earlier timestep come first, each timestep's
    /// block in row-major spatial order.
    pub tokens: Tensor,
    pub row: usize,
    pub col: usize,
}

/// All windows of a partition plus the layout needed to invert it.
pub struct WindowSet {
    pub windows: Vec<Window>,
    pub m: usize,
    pub timesteps: usize,
    /// Window grid dimensions (rows, cols).
    pub grid: (usize, usize),
    pub shifted: bool,
}

impl WindowSet {
    pub fn tokens_per_window(&self) -> usize {
        self.timesteps * self.m * self.m
    }
}

/// Evenly partition one or two [h,w,C] feature maps into non-overlapping
/// M x M windows; both timesteps are partitioned the same way and tokens at
/// the same spatial position share a window. `h` and `w` must be multiples
/// of M (pad beforehand if not).
pub fn window_partition(frames: &[&Tensor], m: usize) -> WindowSet {
    assert!(
        matches!(frames.len(), 1 | 2),
        "window_partition takes 1 or 2 timesteps, got {}",
        frames.len()
    );
    let shape = frames[0].shape().to_vec();
    assert_eq!(shape.len(), 3, "window_partition needs [h,w,C] maps");
    for f in frames {
        assert_eq!(f.shape(), &shape[..], "timesteps must have identical shape");
    }
    let (h, w, c) = (shape[0], shape[1], shape[2]);
    assert!(
        h % m == 0 && w % m == 0,
        "map {h}x{w} is not a multiple of window {m}; pad first"
    );
    let flat: Vec<Tensor> = frames.iter().map(|f| f.reshape(&[h * w, c])).collect();
    let (rows, cols) = (h / m, w / m);
    let mut windows = Vec::with_capacity(rows * cols);
    for wr in 0..rows {
        for wc in 0..cols {
            let mut idx = Vec::with_capacity(m * m);
            for iy in 0..m {
                for ix in 0..m {
                    idx.push((wr * m + iy) * w + (wc * m + ix));
                }
            }
            let parts: Vec<Tensor> = flat.iter().map(|f| f.gather_rows(&idx)).collect();
            let tokens = if parts.len() == 1 {
                parts[0].clone()
            } else {
                Tensor::concat_rows(&[&parts[0], &parts[1]])
            };
            windows.push(Window { tokens, row: wr, col: wc });
        }
    }
    WindowSet { windows, m, timesteps: frames.len(), grid: (rows, cols), shifted: false }
}

/// Exact inverse of [`window_partition`]: reassemble per-timestep [h,w,C]
/// maps. Window order within the set does not matter; the origin metadata
/// determines placement. Panics if the set does not cover the map exactly.
pub fn window_reverse(ws: &WindowSet, h: usize, w: usize) -> Vec<Tensor> {
    let m = ws.m;
    assert!(h.is_multiple_of(m) && w.is_multiple_of(m), "window_reverse: {h}x{w} not a multiple of {m}");
    let (rows, cols) = (h / m, w / m);
    assert_eq!(
        ws.windows.len(),
        rows * cols,
        "window_reverse: {} windows cannot tile a {rows}x{cols} grid",
        ws.windows.len()
    );
    let mut slot = vec![usize::MAX; rows * cols];
    for (i, win) in ws.windows.iter().enumerate() {
        assert!(win.row < rows && win.col < cols, "window origin out of grid");
        let s = win.row * cols + win.col;
        assert!(slot[s] == usize::MAX, "duplicate window at ({}, {})", win.row, win.col);
        slot[s] = i;
    }
    let c = ws.windows[0].tokens.shape()[1];
    let per_window = ws.tokens_per_window();
    let all_refs: Vec<&Tensor> = ws.windows.iter().map(|w| &w.tokens).collect();
    let stacked = Tensor::concat_rows(&all_refs);
    let mut out = Vec::with_capacity(ws.timesteps);
    for t in 0..ws.timesteps {
        let mut idx = Vec::with_capacity(h * w);
        for y in 0..h {
            for x in 0..w {
                let wi = slot[(y / m) * cols + (x / m)];
                let tok = t * m * m + (y % m) * m + (x % m);
                idx.push(wi * per_window + tok);
            }
        }
        out.push(stacked.gather_rows(&idx).reshape(&[h, w, c]));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::max_abs_diff;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn four_by_four_m2_single_frame() {
        let x = Tensor::from_vec(&[4, 4, 1], (0..16).map(|v| v as f64).collect());
        let ws = window_partition(&[&x], 2);
        assert_eq!(ws.windows.len(), 4);
        assert_eq!(ws.tokens_per_window(), 4);
        // Top-left window holds tokens 0,1,4,5.
        assert_eq!(ws.windows[0].tokens.to_vec(), vec![0.0, 1.0, 4.0, 5.0]);
    }

    #[test]
    fn whole_map_window() {
        let x = Tensor::from_vec(&[3, 3, 2], (0..18).map(|v| v as f64).collect());
        let ws = window_partition(&[&x], 3);
        assert_eq!(ws.windows.len(), 1);
        assert_eq!(ws.windows[0].tokens.shape(), &[9, 2]);
    }

    #[test]
    fn two_timesteps_share_windows() {
        let a = Tensor::from_vec(&[4, 4, 1], (0..16).map(|v| v as f64).collect());
        let b = Tensor::from_vec(&[4, 4, 1], (100..116).map(|v| v as f64).collect());
        let ws = window_partition(&[&a, &b], 2);
        assert_eq!(ws.windows.len(), 4);
        // Same (row,col) in both frames lands in the same window: frame tokens
        // first, then the matching tokens of the second frame.
        assert_eq!(ws.windows[0].tokens.to_vec(), vec![0.0, 1.0, 4.0, 5.0, 100.0, 101.0, 104.0, 105.0]);
    }

    #[test]
    fn reverse_is_exact_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = Tensor::uniform(&[8, 8, 4], -1.0, 1.0, &mut rng);
        let b = Tensor::uniform(&[8, 8, 4], -1.0, 1.0, &mut rng);
        let ws = window_partition(&[&a, &b], 2);
        let back = window_reverse(&ws, 8, 8);
        assert_eq!(max_abs_diff(&back[0], &a), 0.0);
        assert_eq!(max_abs_diff(&back[1], &b), 0.0);
    }

    #[test]
    fn reverse_after_roll_then_unroll() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = Tensor::uniform(&[6, 4, 3], -1.0, 1.0, &mut rng);
        let rolled = a.roll2d(-1, -1);
        let ws = window_partition(&[&rolled], 2);
        let back = window_reverse(&ws, 6, 4)[0].roll2d(1, 1);
        assert_eq!(max_abs_diff(&back, &a), 0.0);
    }

    #[test]
    fn reverse_is_order_independent() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = Tensor::uniform(&[4, 6, 2], -1.0, 1.0, &mut rng);
        let mut ws = window_partition(&[&a], 2);
        ws.windows.reverse();
        ws.windows.swap(0, 2);
        let back = window_reverse(&ws, 4, 6);
        assert_eq!(max_abs_diff(&back[0], &a), 0.0);
    }

    #[test]
    #[should_panic(expected = "not a multiple")]
    fn non_multiple_size_panics() {
        let x = Tensor::zeros(&[5, 4, 1]);
        let _ = window_partition(&[&x], 2);
    }

    #[test]
    #[should_panic(expected = "duplicate window")]
    fn incomplete_window_set_panics() {
        let x = Tensor::zeros(&[4, 4, 1]);
        let mut ws = window_partition(&[&x], 2);
        let extra = Window { tokens: ws.windows[0].tokens.clone(), row: 0, col: 0 };
        ws.windows[1] = extra;
        let _ = window_reverse(&ws, 4, 4);
    }
}

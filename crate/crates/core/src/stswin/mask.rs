//! Attention masks for cyclic-shift windows and padded maps.
//!
//! The space shift is computed by rolling the map by (-M/2, -M/2) and
//! partitioning regularly; tokens that were not neighbours before the roll
//! end up sharing a window and must not attend to each other. The region
//! grid below assigns each post-roll position a label identifying its
//! pre-roll region; the mask forbids attention between differing labels.

use super::MASK_NEG;
use crate::tensor::Tensor;

/// Pre-roll region label for every position of the rolled map. Positions in
/// the last M rows/cols of the rolled canvas are split at the wrap seam.
pub fn region_grid(h: usize, w: usize, m: usize) -> Vec<u8> {
    let s = m / 2;
    let band = |v: usize, n: usize| -> u8 {
        if s == 0 || v < n - m {
            0
        } else if v < n - s {
            1
        } else {
            2
        }
    };
    let mut grid = vec![0u8; h * w];
    for y in 0..h {
        for x in 0..w {
            grid[y * w + x] = band(y, h) * 3 + band(x, w);
        }
    }
    grid
}

/// Per-window additive masks for shifted-window attention over `timesteps`
/// frames. Windows are in row-major grid order; each mask is
/// [T*M*M, T*M*M] with 0 for allowed pairs and -1e9 for forbidden ones.
/// A window size of 1 has no shift and yields all-zero masks.
pub fn make_shift_mask(h: usize, w: usize, m: usize, timesteps: usize) -> Vec<Tensor> {
    assert!(h.is_multiple_of(m) && w.is_multiple_of(m), "make_shift_mask: {h}x{w} not a multiple of {m}");
    let regions = region_grid(h, w, m);
    build_masks(h, w, m, timesteps, Some(&regions), None)
}

/// Masks combining the shift regions (when `regions` is given) with key
/// validity (when `valid` is given; false marks padded positions that must
/// not be attended to). Returns `None` when nothing is masked.
pub fn window_masks(
    h: usize,
    w: usize,
    m: usize,
    timesteps: usize,
    regions: Option<&[u8]>,
    valid: Option<&[bool]>,
) -> Option<Vec<Tensor>> {
    if regions.is_none() && valid.is_none() {
        return None;
    }
    Some(build_masks(h, w, m, timesteps, regions, valid))
}

fn build_masks(
    h: usize,
    w: usize,
    m: usize,
    timesteps: usize,
    regions: Option<&[u8]>,
    valid: Option<&[bool]>,
) -> Vec<Tensor> {
    let (rows, cols) = (h / m, w / m);
    let spatial = m * m;
    let n = timesteps * spatial;
    let mut masks = Vec::with_capacity(rows * cols);
    for wr in 0..rows {
        for wc in 0..cols {
            // Per spatial slot: region label and validity.
            let mut reg = vec![0u8; spatial];
            let mut ok = vec![true; spatial];
            for iy in 0..m {
                for ix in 0..m {
                    let p = (wr * m + iy) * w + (wc * m + ix);
                    if let Some(r) = regions {
                        reg[iy * m + ix] = r[p];
                    }
                    if let Some(v) = valid {
                        ok[iy * m + ix] = v[p];
                    }
                }
            }
            let mut data = vec![0.0; n * n];
            for i in 0..n {
                let si = i % spatial;
                for j in 0..n {
                    let sj = j % spatial;
                    if reg[si] != reg[sj] || !ok[sj] {
                        data[i * n + j] = MASK_NEG;
                    }
                }
            }
            masks.push(Tensor::from_vec(&[n, n], data));
        }
    }
    masks
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_one_has_zero_masks() {
        let masks = make_shift_mask(3, 3, 1, 1);
        assert_eq!(masks.len(), 9);
        for m in masks {
            assert!(m.to_vec().iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn single_window_splits_into_four_region_groups() {
        // h = w = M: the lone window is partitioned into 4 groups by the
        // wrap seams along each axis.
        let masks = make_shift_mask(4, 4, 4, 1);
        assert_eq!(masks.len(), 1);
        let regions = region_grid(4, 4, 4);
        let distinct: std::collections::BTreeSet<u8> = regions.iter().copied().collect();
        assert_eq!(distinct.len(), 4);
        let md = masks[0].to_vec();
        for i in 0..16 {
            for j in 0..16 {
                let expect = if regions[i] == regions[j] { 0.0 } else { MASK_NEG };
                assert_eq!(md[i * 16 + j], expect);
            }
        }
    }

    #[test]
    fn interior_windows_are_unmasked() {
        // 6x6, M=2: windows not touching the last row/col of the rolled
        // canvas see a single region.
        let masks = make_shift_mask(6, 6, 2, 1);
        assert_eq!(masks.len(), 9);
        for (i, m) in masks.iter().enumerate() {
            let (wr, wc) = (i / 3, i % 3);
            let all_zero = m.to_vec().iter().all(|v| *v == 0.0);
            if wr < 2 && wc < 2 {
                assert!(all_zero, "interior window ({wr},{wc}) should be unmasked");
            } else {
                assert!(!all_zero, "boundary window ({wr},{wc}) should be masked");
            }
        }
    }

    #[test]
    fn time_extension_masks_by_spatial_slot() {
        let masks = make_shift_mask(2, 2, 2, 2);
        let md = masks[0].to_vec();
        let regions = region_grid(2, 2, 2);
        let n = 8;
        for i in 0..n {
            for j in 0..n {
                let expect = if regions[i % 4] == regions[j % 4] { 0.0 } else { MASK_NEG };
                assert_eq!(md[i * n + j], expect, "pair ({i},{j})");
            }
        }
    }

    #[test]
    fn validity_masks_padded_keys_everywhere() {
        let mut valid = vec![true; 4];
        valid[3] = false;
        let masks = window_masks(2, 2, 2, 1, None, Some(&valid)).unwrap();
        let md = masks[0].to_vec();
        for i in 0..4 {
            for j in 0..4 {
                let expect = if j == 3 { MASK_NEG } else { 0.0 };
                assert_eq!(md[i * 4 + j], expect);
            }
        }
    }
}

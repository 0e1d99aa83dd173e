//! Independent reference implementations used to verify the main code paths.
//!
//! Everything here is deliberately written in the dumbest correct style —
//! explicit nested loops over plain slices, no shared helpers with the
//! implementations under test — so that an agreement between the two sides
//! is meaningful. The `verify` module and the test suites both call into
//! these.

mod attention;
mod contrast_ref;
mod wilcoxon_ref;

pub use attention::{dense_attention, shifted_window_attention_naive, AttentionRef};
pub use contrast_ref::contrast_loss_bruteforce;
pub use wilcoxon_ref::wilcoxon_exact_p;

/// Six-nested-loop cross-correlation with explicit zero padding, the oracle
/// for `Tensor::conv2d`. Input is [H,W,Cin], kernel [Kh,Kw,Cin,Cout].
pub fn conv2d_naive(
    input: &[f64],
    (h, w, cin): (usize, usize, usize),
    kernel: &[f64],
    (kh, kw, kcin, cout): (usize, usize, usize, usize),
    stride: usize,
    padding: usize,
) -> Vec<f64> {
    assert_eq!(cin, kcin);
    // Materialize the padded input so the index arithmetic below stays dumb.
    let hp = h + 2 * padding;
    let wp = w + 2 * padding;
    let mut padded = vec![0.0; hp * wp * cin];
    for y in 0..h {
        for x in 0..w {
            for c in 0..cin {
                padded[((y + padding) * wp + (x + padding)) * cin + c] = input[(y * w + x) * cin + c];
            }
        }
    }
    let ho = (hp - kh) / stride + 1;
    let wo = (wp - kw) / stride + 1;
    let mut out = vec![0.0; ho * wo * cout];
    for oy in 0..ho {
        for ox in 0..wo {
            for co in 0..cout {
                let mut acc = 0.0;
                for ky in 0..kh {
                    for kx in 0..kw {
                        for ci in 0..cin {
                            let iv = padded[((oy * stride + ky) * wp + (ox * stride + kx)) * cin + ci];
                            let kv = kernel[((ky * kw + kx) * cin + ci) * cout + co];
                            acc += iv * kv;
                        }
                    }
                }
                out[(oy * wo + ox) * cout + co] = acc;
            }
        }
    }
    out
}

/// Bilinear interpolation weights evaluated from the closed form
/// (align-corners false), the oracle for `Tensor::bilinear_upsample`.
pub fn bilinear_upsample_naive(
    input: &[f64],
    (h, w, c): (usize, usize, usize),
    factor: usize,
) -> Vec<f64> {
    let ho = h * factor;
    let wo = w * factor;
    let mut out = vec![0.0; ho * wo * c];
    for oy in 0..ho {
        for ox in 0..wo {
            let sy = (oy as f64 + 0.5) / factor as f64 - 0.5;
            let sx = (ox as f64 + 0.5) / factor as f64 - 0.5;
            let y0 = sy.floor();
            let x0 = sx.floor();
            let fy = sy - y0;
            let fx = sx - x0;
            let clamp = |v: f64, n: usize| -> usize {
                if v < 0.0 {
                    0
                } else if v as usize >= n {
                    n - 1
                } else {
                    v as usize
                }
            };
            let (ya, yb) = (clamp(y0, h), clamp(y0 + 1.0, h));
            let (xa, xb) = (clamp(x0, w), clamp(x0 + 1.0, w));
            for ch in 0..c {
                let v = (1.0 - fy) * (1.0 - fx) * input[(ya * w + xa) * c + ch]
                    + (1.0 - fy) * fx * input[(ya * w + xb) * c + ch]
                    + fy * (1.0 - fx) * input[(yb * w + xa) * c + ch]
                    + fy * fx * input[(yb * w + xb) * c + ch];
                out[(oy * wo + ox) * c + ch] = v;
            }
        }
    }
    out
}

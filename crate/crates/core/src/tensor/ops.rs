//! Forward operations and their backward closures.
//!
//! Conventions: shapes are asserted, not returned as errors; every op's
//! output goes through the finiteness check in the constructor. Backward
//! closures capture `Rc` handles to the buffers they need, never `Tensor`
//! handles, so the graph stays acyclic.

use std::rc::Rc;

use super::Tensor;

fn rows_of(shape: &[usize]) -> (usize, usize) {
    let last = *shape.last().expect("op needs rank >= 1");
    let rows: usize = shape[..shape.len() - 1].iter().product();
    (rows, last)
}

/// a [m,k] x b [k,n] -> [m,n]
fn mm(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for kk in 0..k {
            let av = a[i * k + kk];
            if av == 0.0 {
                continue;
            }
            let brow = kk * n;
            let orow = i * n;
            for j in 0..n {
                out[orow + j] += av * b[brow + j];
            }
        }
    }
    out
}

/// a [m,k] x b^T where b is [n,k] -> [m,n]
fn mm_nt(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let arow = i * k;
        for j in 0..n {
            let brow = j * k;
            let mut acc = 0.0;
            for kk in 0..k {
                acc += a[arow + kk] * b[brow + kk];
            }
            out[i * n + j] = acc;
        }
    }
    out
}

/// a^T x b where a is [m,k], b is [m,n] -> [k,n]
fn mm_tn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; k * n];
    for i in 0..m {
        let arow = i * k;
        let brow = i * n;
        for kk in 0..k {
            let av = a[arow + kk];
            if av == 0.0 {
                continue;
            }
            let orow = kk * n;
            for j in 0..n {
                out[orow + j] += av * b[brow + j];
            }
        }
    }
    out
}

impl Tensor {
    fn binary_elementwise(
        &self,
        other: &Tensor,
        name: &str,
        f: impl Fn(f64, f64) -> f64,
        vjp: impl Fn(&[f64], &[f64], &[f64]) -> (Vec<f64>, Vec<f64>) + 'static,
    ) -> Tensor {
        assert_eq!(self.shape(), other.shape(), "{name}: shape mismatch {:?} vs {:?}", self.shape(), other.shape());
        let a = self.data();
        let b = other.data();
        let out: Vec<f64> = a.iter().zip(b.iter()).map(|(&x, &y)| f(x, y)).collect();
        let (ac, bc) = (a.clone(), b.clone());
        Tensor::from_op(self.shape().to_vec(), out, vec![self.clone(), other.clone()], move |g| {
            let (da, db) = vjp(g, &ac, &bc);
            vec![da, db]
        })
    }

    pub fn add(&self, other: &Tensor) -> Tensor {
        self.binary_elementwise(other, "add", |x, y| x + y, |g, _, _| (g.to_vec(), g.to_vec()))
    }

    pub fn sub(&self, other: &Tensor) -> Tensor {
        self.binary_elementwise(
            other,
            "sub",
            |x, y| x - y,
            |g, _, _| (g.to_vec(), g.iter().map(|v| -v).collect()),
        )
    }

    pub fn mul(&self, other: &Tensor) -> Tensor {
        self.binary_elementwise(
            other,
            "mul",
            |x, y| x * y,
            |g, a, b| {
                let da = g.iter().zip(b).map(|(gv, bv)| gv * bv).collect();
                let db = g.iter().zip(a).map(|(gv, av)| gv * av).collect();
                (da, db)
            },
        )
    }

    pub fn add_scalar(&self, c: f64) -> Tensor {
        let out = self.data().iter().map(|v| v + c).collect();
        Tensor::from_op(self.shape().to_vec(), out, vec![self.clone()], |g| vec![g.to_vec()])
    }

    pub fn mul_scalar(&self, c: f64) -> Tensor {
        let out = self.data().iter().map(|v| v * c).collect();
        Tensor::from_op(self.shape().to_vec(), out, vec![self.clone()], move |g| {
            vec![g.iter().map(|v| v * c).collect()]
        })
    }

    pub fn neg(&self) -> Tensor {
        self.mul_scalar(-1.0)
    }

    pub fn relu(&self) -> Tensor {
        let a = self.data();
        let out = a.iter().map(|&v| v.max(0.0)).collect();
        Tensor::from_op(self.shape().to_vec(), out, vec![self.clone()], move |g| {
            vec![g.iter().zip(a.iter()).map(|(gv, &x)| if x > 0.0 { *gv } else { 0.0 }).collect()]
        })
    }

    /// GELU, tanh approximation.
    pub fn gelu(&self) -> Tensor {
        const A: f64 = 0.044715;
        let c = (2.0 / std::f64::consts::PI).sqrt();
        let a = self.data();
        let out = a
            .iter()
            .map(|&x| {
                let u = c * (x + A * x * x * x);
                0.5 * x * (1.0 + u.tanh())
            })
            .collect();
        Tensor::from_op(self.shape().to_vec(), out, vec![self.clone()], move |g| {
            vec![g
                .iter()
                .zip(a.iter())
                .map(|(gv, &x)| {
                    let u = c * (x + A * x * x * x);
                    let t = u.tanh();
                    let du = c * (1.0 + 3.0 * A * x * x);
                    gv * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du)
                })
                .collect()]
        })
    }

    /// Numerically stable ln(1 + e^x).
    pub fn softplus(&self) -> Tensor {
        let a = self.data();
        let out = a.iter().map(|&x| x.max(0.0) + (-x.abs()).exp().ln_1p()).collect();
        Tensor::from_op(self.shape().to_vec(), out, vec![self.clone()], move |g| {
            vec![g
                .iter()
                .zip(a.iter())
                .map(|(gv, &x)| gv / (1.0 + (-x).exp()))
                .collect()]
        })
    }

    /// [m,k] x [k,n] -> [m,n]
    pub fn matmul(&self, other: &Tensor) -> Tensor {
        assert_eq!(self.rank(), 2, "matmul lhs must be 2-d");
        assert_eq!(other.rank(), 2, "matmul rhs must be 2-d");
        let (m, k) = (self.shape()[0], self.shape()[1]);
        let (k2, n) = (other.shape()[0], other.shape()[1]);
        assert_eq!(k, k2, "matmul: inner dims {k} vs {k2}");
        let a = self.data();
        let b = other.data();
        let out = mm(&a, &b, m, k, n);
        Tensor::from_op(vec![m, n], out, vec![self.clone(), other.clone()], move |g| {
            let da = mm_nt(g, &b, m, n, k); // g [m,n] x b^T -> [m,k]
            let db = mm_tn(&a, g, m, k, n); // a^T x g -> [k,n]
            vec![da, db]
        })
    }

    /// [m,k] x [n,k]^T -> [m,n]; both operands row-major, no transposed copy.
    pub fn matmul_nt(&self, other: &Tensor) -> Tensor {
        assert_eq!(self.rank(), 2, "matmul_nt lhs must be 2-d");
        assert_eq!(other.rank(), 2, "matmul_nt rhs must be 2-d");
        let (m, k) = (self.shape()[0], self.shape()[1]);
        let (n, k2) = (other.shape()[0], other.shape()[1]);
        assert_eq!(k, k2, "matmul_nt: inner dims {k} vs {k2}");
        let a = self.data();
        let b = other.data();
        let out = mm_nt(&a, &b, m, k, n);
        Tensor::from_op(vec![m, n], out, vec![self.clone(), other.clone()], move |g| {
            let da = mm(g, &b, m, n, k); // [m,n] x [n,k]
            let db = mm_tn(g, &a, m, n, k); // g^T x a -> [n,k]
            vec![da, db]
        })
    }

    pub fn reshape(&self, shape: &[usize]) -> Tensor {
        let numel: usize = shape.iter().product();
        assert_eq!(numel, self.numel(), "reshape {:?} -> {:?}", self.shape(), shape);
        let out = self.to_vec();
        Tensor::from_op(shape.to_vec(), out, vec![self.clone()], |g| vec![g.to_vec()])
    }

    /// Broadcast-add a [C] bias over the last dimension.
    pub fn add_bias(&self, bias: &Tensor) -> Tensor {
        let (rows, c) = rows_of(self.shape());
        assert_eq!(bias.shape(), [c], "add_bias: bias shape {:?} vs channels {c}", bias.shape());
        let a = self.data();
        let b = bias.data();
        let mut out = a.as_ref().clone();
        for r in 0..rows {
            for j in 0..c {
                out[r * c + j] += b[j];
            }
        }
        Tensor::from_op(self.shape().to_vec(), out, vec![self.clone(), bias.clone()], move |g| {
            let mut db = vec![0.0; c];
            for r in 0..rows {
                for j in 0..c {
                    db[j] += g[r * c + j];
                }
            }
            vec![g.to_vec(), db]
        })
    }

    pub fn sum_all(&self) -> Tensor {
        let n = self.numel();
        let s: f64 = self.data().iter().sum();
        Tensor::from_op(vec![], vec![s], vec![self.clone()], move |g| vec![vec![g[0]; n]])
    }

    pub fn mean_all(&self) -> Tensor {
        let n = self.numel();
        assert!(n > 0, "mean_all of empty tensor");
        self.sum_all().mul_scalar(1.0 / n as f64)
    }

    /// Sum over the last dimension: [.., C] -> [..].
    pub fn sum_lastdim(&self) -> Tensor {
        let (rows, c) = rows_of(self.shape());
        let a = self.data();
        let out: Vec<f64> = (0..rows).map(|r| a[r * c..(r + 1) * c].iter().sum()).collect();
        let shape = self.shape()[..self.rank() - 1].to_vec();
        Tensor::from_op(shape, out, vec![self.clone()], move |g| {
            let mut dx = vec![0.0; rows * c];
            for r in 0..rows {
                for j in 0..c {
                    dx[r * c + j] = g[r];
                }
            }
            vec![dx]
        })
    }

    /// Row-stack 2-d tensors with a common column count.
    pub fn concat_rows(parts: &[&Tensor]) -> Tensor {
        assert!(!parts.is_empty(), "concat_rows of nothing");
        let c = parts[0].shape()[1];
        let mut data = Vec::new();
        let mut rows = 0usize;
        let mut sizes = Vec::with_capacity(parts.len());
        for p in parts {
            assert_eq!(p.rank(), 2, "concat_rows needs 2-d parts");
            assert_eq!(p.shape()[1], c, "concat_rows: column mismatch");
            data.extend_from_slice(&p.data());
            rows += p.shape()[0];
            sizes.push(p.numel());
        }
        let parents: Vec<Tensor> = parts.iter().map(|p| (*p).clone()).collect();
        Tensor::from_op(vec![rows, c], data, parents, move |g| {
            let mut offset = 0;
            sizes
                .iter()
                .map(|&sz| {
                    let part = g[offset..offset + sz].to_vec();
                    offset += sz;
                    part
                })
                .collect()
        })
    }

    /// Concatenate along the last dimension; leading dims must agree.
    pub fn concat_lastdim(parts: &[&Tensor]) -> Tensor {
        assert!(!parts.is_empty(), "concat_lastdim of nothing");
        let lead = &parts[0].shape()[..parts[0].rank() - 1];
        let rows: usize = lead.iter().product();
        let widths: Vec<usize> = parts
            .iter()
            .map(|p| {
                assert_eq!(&p.shape()[..p.rank() - 1], lead, "concat_lastdim: leading dims differ");
                *p.shape().last().unwrap()
            })
            .collect();
        let total: usize = widths.iter().sum();
        let datas: Vec<Rc<Vec<f64>>> = parts.iter().map(|p| p.data()).collect();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (d, &w) in datas.iter().zip(&widths) {
                out.extend_from_slice(&d[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead.to_vec();
        shape.push(total);
        let parents: Vec<Tensor> = parts.iter().map(|p| (*p).clone()).collect();
        let widths2 = widths.clone();
        Tensor::from_op(shape, out, parents, move |g| {
            let mut grads: Vec<Vec<f64>> = widths2.iter().map(|&w| Vec::with_capacity(rows * w)).collect();
            for r in 0..rows {
                let mut off = r * total;
                for (gi, &w) in grads.iter_mut().zip(&widths2) {
                    gi.extend_from_slice(&g[off..off + w]);
                    off += w;
                }
            }
            grads
        })
    }

    /// Contiguous row slice of a 2-d tensor.
    pub fn slice_rows(&self, start: usize, len: usize) -> Tensor {
        assert_eq!(self.rank(), 2, "slice_rows needs 2-d");
        let (n, c) = (self.shape()[0], self.shape()[1]);
        assert!(start + len <= n, "slice_rows: {start}+{len} > {n}");
        let a = self.data();
        let out = a[start * c..(start + len) * c].to_vec();
        Tensor::from_op(vec![len, c], out, vec![self.clone()], move |g| {
            let mut dx = vec![0.0; n * c];
            dx[start * c..(start + len) * c].copy_from_slice(g);
            vec![dx]
        })
    }

    /// Contiguous column slice of a 2-d tensor.
    pub fn slice_cols(&self, start: usize, len: usize) -> Tensor {
        assert_eq!(self.rank(), 2, "slice_cols needs 2-d");
        let (n, c) = (self.shape()[0], self.shape()[1]);
        assert!(start + len <= c, "slice_cols: {start}+{len} > {c}");
        let a = self.data();
        let mut out = Vec::with_capacity(n * len);
        for r in 0..n {
            out.extend_from_slice(&a[r * c + start..r * c + start + len]);
        }
        Tensor::from_op(vec![n, len], out, vec![self.clone()], move |g| {
            let mut dx = vec![0.0; n * c];
            for r in 0..n {
                dx[r * c + start..r * c + start + len].copy_from_slice(&g[r * len..(r + 1) * len]);
            }
            vec![dx]
        })
    }

    /// Select rows of a 2-d tensor by index; duplicates allowed (the backward
    /// pass scatter-adds, so this doubles as a row broadcast).
    pub fn gather_rows(&self, idx: &[usize]) -> Tensor {
        assert_eq!(self.rank(), 2, "gather_rows needs 2-d");
        let (n, c) = (self.shape()[0], self.shape()[1]);
        let a = self.data();
        let mut out = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            assert!(i < n, "gather_rows: index {i} out of {n}");
            out.extend_from_slice(&a[i * c..(i + 1) * c]);
        }
        let idx = idx.to_vec();
        let m = idx.len();
        Tensor::from_op(vec![m, c], out, vec![self.clone()], move |g| {
            let mut dx = vec![0.0; n * c];
            for (r, &i) in idx.iter().enumerate() {
                for j in 0..c {
                    dx[i * c + j] += g[r * c + j];
                }
            }
            vec![dx]
        })
    }

    /// Row-wise softmax with max subtraction; rows sum to one.
    pub fn softmax_lastdim(&self) -> Tensor {
        let (rows, c) = rows_of(self.shape());
        assert!(c > 0, "softmax over empty dim");
        let a = self.data();
        let mut out = vec![0.0; rows * c];
        for r in 0..rows {
            let row = &a[r * c..(r + 1) * c];
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for (j, &v) in row.iter().enumerate() {
                let e = (v - m).exp();
                out[r * c + j] = e;
                z += e;
            }
            for j in 0..c {
                out[r * c + j] /= z;
            }
        }
        let y = Rc::new(out.clone());
        Tensor::from_op(self.shape().to_vec(), out, vec![self.clone()], move |g| {
            let mut dx = vec![0.0; rows * c];
            for r in 0..rows {
                let yr = &y[r * c..(r + 1) * c];
                let gr = &g[r * c..(r + 1) * c];
                let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                for j in 0..c {
                    dx[r * c + j] = yr[j] * (gr[j] - dot);
                }
            }
            vec![dx]
        })
    }

    /// Per-token normalization over the channel (last) dimension, then affine.
    pub fn layer_norm(&self, gain: &Tensor, bias: &Tensor, eps: f64) -> Tensor {
        assert!(eps > 0.0, "layer_norm: eps must be positive");
        let (rows, c) = rows_of(self.shape());
        assert_eq!(gain.shape(), [c], "layer_norm: gain shape");
        assert_eq!(bias.shape(), [c], "layer_norm: bias shape");
        let a = self.data();
        let gm = gain.data();
        let bt = bias.data();
        let mut xhat = vec![0.0; rows * c];
        let mut inv_std = vec![0.0; rows];
        let mut out = vec![0.0; rows * c];
        for r in 0..rows {
            let row = &a[r * c..(r + 1) * c];
            let mu: f64 = row.iter().sum::<f64>() / c as f64;
            let var: f64 = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / c as f64;
            let inv = 1.0 / (var + eps).sqrt();
            inv_std[r] = inv;
            for j in 0..c {
                let xh = (row[j] - mu) * inv;
                xhat[r * c + j] = xh;
                out[r * c + j] = xh * gm[j] + bt[j];
            }
        }
        let xhat = Rc::new(xhat);
        let inv_std = Rc::new(inv_std);
        let gm2 = gm.clone();
        Tensor::from_op(
            self.shape().to_vec(),
            out,
            vec![self.clone(), gain.clone(), bias.clone()],
            move |g| {
                let mut dx = vec![0.0; rows * c];
                let mut dgain = vec![0.0; c];
                let mut dbias = vec![0.0; c];
                for r in 0..rows {
                    let xr = &xhat[r * c..(r + 1) * c];
                    let gr = &g[r * c..(r + 1) * c];
                    let mut m1 = 0.0;
                    let mut m2 = 0.0;
                    for j in 0..c {
                        let dxh = gr[j] * gm2[j];
                        m1 += dxh;
                        m2 += dxh * xr[j];
                        dgain[j] += gr[j] * xr[j];
                        dbias[j] += gr[j];
                    }
                    m1 /= c as f64;
                    m2 /= c as f64;
                    for j in 0..c {
                        let dxh = gr[j] * gm2[j];
                        dx[r * c + j] = inv_std[r] * (dxh - m1 - xr[j] * m2);
                    }
                }
                vec![dx, dgain, dbias]
            },
        )
    }

    /// Group normalization over an [H,W,C] map: each group of channels is
    /// normalized jointly across all spatial positions, then per-channel affine.
    pub fn group_norm(&self, groups: usize, gain: &Tensor, bias: &Tensor, eps: f64) -> Tensor {
        assert_eq!(self.rank(), 3, "group_norm needs [H,W,C]");
        let (h, w, c) = (self.shape()[0], self.shape()[1], self.shape()[2]);
        assert!(groups > 0 && c % groups == 0, "group_norm: {c} channels, {groups} groups");
        assert_eq!(gain.shape(), [c]);
        assert_eq!(bias.shape(), [c]);
        let cg = c / groups;
        let hw = h * w;
        let a = self.data();
        let gm = gain.data();
        let bt = bias.data();
        let mut xhat = vec![0.0; hw * c];
        let mut inv_std = vec![0.0; groups];
        let mut out = vec![0.0; hw * c];
        let n_per = (hw * cg) as f64;
        #[allow(clippy::needless_range_loop)]
        for grp in 0..groups {
            let c0 = grp * cg;
            let mut mu = 0.0;
            for p in 0..hw {
                for j in 0..cg {
                    mu += a[p * c + c0 + j];
                }
            }
            mu /= n_per;
            let mut var = 0.0;
            for p in 0..hw {
                for j in 0..cg {
                    let d = a[p * c + c0 + j] - mu;
                    var += d * d;
                }
            }
            var /= n_per;
            let inv = 1.0 / (var + eps).sqrt();
            inv_std[grp] = inv;
            for p in 0..hw {
                for j in 0..cg {
                    let idx = p * c + c0 + j;
                    let xh = (a[idx] - mu) * inv;
                    xhat[idx] = xh;
                    out[idx] = xh * gm[c0 + j] + bt[c0 + j];
                }
            }
        }
        let xhat = Rc::new(xhat);
        let inv_std = Rc::new(inv_std);
        let gm2 = gm.clone();
        Tensor::from_op(
            self.shape().to_vec(),
            out,
            vec![self.clone(), gain.clone(), bias.clone()],
            move |g| {
                let mut dx = vec![0.0; hw * c];
                let mut dgain = vec![0.0; c];
                let mut dbias = vec![0.0; c];
                for grp in 0..groups {
                    let c0 = grp * cg;
                    let mut m1 = 0.0;
                    let mut m2 = 0.0;
                    for p in 0..hw {
                        for j in 0..cg {
                            let idx = p * c + c0 + j;
                            let dxh = g[idx] * gm2[c0 + j];
                            m1 += dxh;
                            m2 += dxh * xhat[idx];
                            dgain[c0 + j] += g[idx] * xhat[idx];
                            dbias[c0 + j] += g[idx];
                        }
                    }
                    m1 /= n_per;
                    m2 /= n_per;
                    for p in 0..hw {
                        for j in 0..cg {
                            let idx = p * c + c0 + j;
                            let dxh = g[idx] * gm2[c0 + j];
                            dx[idx] = inv_std[grp] * (dxh - m1 - xhat[idx] * m2);
                        }
                    }
                }
                vec![dx, dgain, dbias]
            },
        )
    }

    /// 2-d cross-correlation on an [H,W,Cin] map with an [Kh,Kw,Cin,Cout]
    /// kernel, zero padding.
    pub fn conv2d(&self, kernel: &Tensor, stride: usize, padding: usize) -> Tensor {
        self.conv2d_dilated(kernel, stride, padding, 1)
    }

    /// Cross-correlation with dilated (atrous) kernel taps spaced `dilation`
    /// apart. `conv2d` is the dilation-1 case.
    pub fn conv2d_dilated(&self, kernel: &Tensor, stride: usize, padding: usize, dilation: usize) -> Tensor {
        assert_eq!(self.rank(), 3, "conv2d input must be [H,W,Cin]");
        assert_eq!(kernel.rank(), 4, "conv2d kernel must be [Kh,Kw,Cin,Cout]");
        let (h, w, cin) = (self.shape()[0], self.shape()[1], self.shape()[2]);
        let (kh, kw, kcin, cout) = (
            kernel.shape()[0],
            kernel.shape()[1],
            kernel.shape()[2],
            kernel.shape()[3],
        );
        assert!(kh % 2 == 1 && kw % 2 == 1, "conv2d: kernel dims must be odd");
        assert_eq!(cin, kcin, "conv2d: {cin} input channels vs kernel {kcin}");
        assert!(stride >= 1, "conv2d: stride must be >= 1");
        assert!(dilation >= 1, "conv2d: dilation must be >= 1");
        // Effective kernel extent with dilated taps.
        let eh = (kh - 1) * dilation + 1;
        let ew = (kw - 1) * dilation + 1;
        assert!(h + 2 * padding >= eh && w + 2 * padding >= ew, "conv2d: kernel larger than padded input");
        let ho = (h + 2 * padding - eh) / stride + 1;
        let wo = (w + 2 * padding - ew) / stride + 1;
        let a = self.data();
        let k = kernel.data();
        let mut out = vec![0.0; ho * wo * cout];
        for oy in 0..ho {
            for ox in 0..wo {
                let orow = (oy * wo + ox) * cout;
                for ky in 0..kh {
                    let iy = (oy * stride + ky * dilation) as isize - padding as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..kw {
                        let ix = (ox * stride + kx * dilation) as isize - padding as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        let irow = (iy as usize * w + ix as usize) * cin;
                        let krow = (ky * kw + kx) * cin * cout;
                        for ci in 0..cin {
                            let v = a[irow + ci];
                            if v == 0.0 {
                                continue;
                            }
                            let kr = krow + ci * cout;
                            for co in 0..cout {
                                out[orow + co] += v * k[kr + co];
                            }
                        }
                    }
                }
            }
        }
        Tensor::from_op(
            vec![ho, wo, cout],
            out,
            vec![self.clone(), kernel.clone()],
            move |g| {
                let mut din = vec![0.0; h * w * cin];
                let mut dk = vec![0.0; kh * kw * cin * cout];
                for oy in 0..ho {
                    for ox in 0..wo {
                        let orow = (oy * wo + ox) * cout;
                        for ky in 0..kh {
                            let iy = (oy * stride + ky * dilation) as isize - padding as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for kx in 0..kw {
                                let ix = (ox * stride + kx * dilation) as isize - padding as isize;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                let irow = (iy as usize * w + ix as usize) * cin;
                                let krow = (ky * kw + kx) * cin * cout;
                                for ci in 0..cin {
                                    let v = a[irow + ci];
                                    let kr = krow + ci * cout;
                                    let mut acc = 0.0;
                                    for co in 0..cout {
                                        let gv = g[orow + co];
                                        acc += k[kr + co] * gv;
                                        dk[kr + co] += v * gv;
                                    }
                                    din[irow + ci] += acc;
                                }
                            }
                        }
                    }
                }
                vec![din, dk]
            },
        )
    }

    /// Cyclic 2-d translation of an [H,W,C] map: output position (y,x) takes
    /// the input at ((y-dy) mod H, (x-dx) mod W). Shift arguments may be
    /// negative or exceed the map size.
    pub fn roll2d(&self, dy: isize, dx: isize) -> Tensor {
        assert_eq!(self.rank(), 3, "roll2d needs [H,W,C]");
        let (h, w, c) = (self.shape()[0], self.shape()[1], self.shape()[2]);
        let a = self.data();
        let shift = |v: isize, n: usize| -> usize { v.rem_euclid(n as isize) as usize };
        let (sy, sx) = (shift(dy, h), shift(dx, w));
        let mut out = vec![0.0; h * w * c];
        for y in 0..h {
            let src_y = (y + h - sy) % h;
            for x in 0..w {
                let src_x = (x + w - sx) % w;
                let dst = (y * w + x) * c;
                let src = (src_y * w + src_x) * c;
                out[dst..dst + c].copy_from_slice(&a[src..src + c]);
            }
        }
        Tensor::from_op(self.shape().to_vec(), out, vec![self.clone()], move |g| {
            // The adjoint of a roll is the inverse roll.
            let mut dx_buf = vec![0.0; h * w * c];
            for y in 0..h {
                let src_y = (y + sy) % h;
                for x in 0..w {
                    let src_x = (x + sx) % w;
                    let dst = (y * w + x) * c;
                    let src = (src_y * w + src_x) * c;
                    dx_buf[dst..dst + c].copy_from_slice(&g[src..src + c]);
                }
            }
            vec![dx_buf]
        })
    }

    /// Bilinear upsampling by an integer factor, align-corners false.
    pub fn bilinear_upsample(&self, factor: usize) -> Tensor {
        assert_eq!(self.rank(), 3, "bilinear_upsample needs [H,W,C]");
        assert!(factor >= 1, "bilinear_upsample: factor must be >= 1");
        if factor == 1 {
            // Identity, but still differentiable.
            return self.reshape(self.shape());
        }
        let (h, w, c) = (self.shape()[0], self.shape()[1], self.shape()[2]);
        let (ho, wo) = (h * factor, w * factor);
        let taps = |o: usize, f: usize, n: usize| -> (usize, usize, f64) {
            let src = (o as f64 + 0.5) / f as f64 - 0.5;
            let i0 = src.floor();
            let frac = src - i0;
            let a = (i0.max(0.0) as usize).min(n - 1);
            let b = ((i0 + 1.0).max(0.0) as usize).min(n - 1);
            (a, b, frac)
        };
        let a = self.data();
        let mut out = vec![0.0; ho * wo * c];
        for oy in 0..ho {
            let (y0, y1, fy) = taps(oy, factor, h);
            for ox in 0..wo {
                let (x0, x1, fx) = taps(ox, factor, w);
                let dst = (oy * wo + ox) * c;
                let p00 = (y0 * w + x0) * c;
                let p01 = (y0 * w + x1) * c;
                let p10 = (y1 * w + x0) * c;
                let p11 = (y1 * w + x1) * c;
                for ch in 0..c {
                    out[dst + ch] = (1.0 - fy) * ((1.0 - fx) * a[p00 + ch] + fx * a[p01 + ch])
                        + fy * ((1.0 - fx) * a[p10 + ch] + fx * a[p11 + ch]);
                }
            }
        }
        Tensor::from_op(vec![ho, wo, c], out, vec![self.clone()], move |g| {
            let mut dx = vec![0.0; h * w * c];
            for oy in 0..ho {
                let (y0, y1, fy) = taps(oy, factor, h);
                for ox in 0..wo {
                    let (x0, x1, fx) = taps(ox, factor, w);
                    let src = (oy * wo + ox) * c;
                    let p00 = (y0 * w + x0) * c;
                    let p01 = (y0 * w + x1) * c;
                    let p10 = (y1 * w + x0) * c;
                    let p11 = (y1 * w + x1) * c;
                    for ch in 0..c {
                        let gv = g[src + ch];
                        dx[p00 + ch] += (1.0 - fy) * (1.0 - fx) * gv;
                        dx[p01 + ch] += (1.0 - fy) * fx * gv;
                        dx[p10 + ch] += fy * (1.0 - fx) * gv;
                        dx[p11 + ch] += fy * fx * gv;
                    }
                }
            }
            vec![dx]
        })
    }

    /// Zero-pad the bottom/right of an [H,W,C] map.
    pub fn pad_bottom_right(&self, pad_h: usize, pad_w: usize) -> Tensor {
        assert_eq!(self.rank(), 3, "pad_bottom_right needs [H,W,C]");
        if pad_h == 0 && pad_w == 0 {
            return self.reshape(self.shape());
        }
        let (h, w, c) = (self.shape()[0], self.shape()[1], self.shape()[2]);
        let (ho, wo) = (h + pad_h, w + pad_w);
        let a = self.data();
        let mut out = vec![0.0; ho * wo * c];
        for y in 0..h {
            out[(y * wo) * c..(y * wo + w) * c].copy_from_slice(&a[(y * w) * c..(y * w + w) * c]);
        }
        Tensor::from_op(vec![ho, wo, c], out, vec![self.clone()], move |g| {
            let mut dx = vec![0.0; h * w * c];
            for y in 0..h {
                dx[(y * w) * c..(y * w + w) * c].copy_from_slice(&g[(y * wo) * c..(y * wo + w) * c]);
            }
            vec![dx]
        })
    }

    /// Crop a top-left [h,w] region out of an [H,W,C] map.
    pub fn crop2d(&self, h: usize, w: usize) -> Tensor {
        assert_eq!(self.rank(), 3, "crop2d needs [H,W,C]");
        let (hi, wi, c) = (self.shape()[0], self.shape()[1], self.shape()[2]);
        assert!(h <= hi && w <= wi, "crop2d: {h}x{w} out of {hi}x{wi}");
        if h == hi && w == wi {
            return self.reshape(self.shape());
        }
        let a = self.data();
        let mut out = vec![0.0; h * w * c];
        for y in 0..h {
            out[(y * w) * c..(y * w + w) * c].copy_from_slice(&a[(y * wi) * c..(y * wi + w) * c]);
        }
        Tensor::from_op(vec![h, w, c], out, vec![self.clone()], move |g| {
            let mut dx = vec![0.0; hi * wi * c];
            for y in 0..h {
                dx[(y * wi) * c..(y * wi + w) * c].copy_from_slice(&g[(y * w) * c..(y * w + w) * c]);
            }
            vec![dx]
        })
    }

    /// Rows scaled to exact unit L2 norm. `eps` only enters for degenerate
    /// rows: when the norm falls below `eps` it is added to the denominator,
    /// mapping the zero vector to zero instead of NaN.
    pub fn l2_normalize_rows(&self, eps: f64) -> Tensor {
        assert_eq!(self.rank(), 2, "l2_normalize_rows needs 2-d");
        let (n, c) = (self.shape()[0], self.shape()[1]);
        let a = self.data();
        let mut out = vec![0.0; n * c];
        let mut dens = vec![0.0; n];
        for r in 0..n {
            let row = &a[r * c..(r + 1) * c];
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            let den = if norm > eps { norm } else { norm + eps };
            dens[r] = den;
            for j in 0..c {
                out[r * c + j] = row[j] / den;
            }
        }
        let dens = Rc::new(dens);
        Tensor::from_op(self.shape().to_vec(), out, vec![self.clone()], move |g| {
            // y = x / den with d(den)/dx = x/den on the regular branch, so
            // dx = g/den - x (g.x)/den^3; degenerate rows keep only the
            // first term.
            let mut dx = vec![0.0; n * c];
            for r in 0..n {
                let row = &a[r * c..(r + 1) * c];
                let gr = &g[r * c..(r + 1) * c];
                let den = dens[r];
                let dot: f64 = gr.iter().zip(row).map(|(gv, xv)| gv * xv).sum();
                let coef = dot / (den * den * den);
                for j in 0..c {
                    dx[r * c + j] = gr[j] / den - row[j] * coef;
                }
            }
            vec![dx]
        })
    }

    /// Per-row cross entropy of [N,K] logits against class labels; rows whose
    /// label equals `ignore_id` contribute zero loss and zero gradient.
    pub fn ce_per_pixel(&self, labels: &[u8], ignore_id: u8) -> Tensor {
        assert_eq!(self.rank(), 2, "ce_per_pixel needs [N,K] logits");
        let (n, k) = (self.shape()[0], self.shape()[1]);
        assert_eq!(labels.len(), n, "ce_per_pixel: {} labels for {n} rows", labels.len());
        let a = self.data();
        let mut out = vec![0.0; n];
        let mut probs = vec![0.0; n * k];
        for r in 0..n {
            let y = labels[r];
            if y == ignore_id {
                continue;
            }
            assert!((y as usize) < k, "ce_per_pixel: label {y} out of {k} classes");
            let row = &a[r * k..(r + 1) * k];
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for (j, &v) in row.iter().enumerate() {
                let e = (v - m).exp();
                probs[r * k + j] = e;
                z += e;
            }
            for j in 0..k {
                probs[r * k + j] /= z;
            }
            out[r] = m + z.ln() - row[y as usize];
        }
        let probs = Rc::new(probs);
        let labels = labels.to_vec();
        Tensor::from_op(vec![n], out, vec![self.clone()], move |g| {
            let mut dx = vec![0.0; n * k];
            for r in 0..n {
                let y = labels[r];
                if y == ignore_id {
                    continue;
                }
                let gv = g[r];
                if gv == 0.0 {
                    continue;
                }
                for j in 0..k {
                    let ind = if j == y as usize { 1.0 } else { 0.0 };
                    dx[r * k + j] = gv * (probs[r * k + j] - ind);
                }
            }
            vec![dx]
        })
    }
}

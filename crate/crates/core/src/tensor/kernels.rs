//! Slice-level compute kernels shared by the functional ops and the graph.
//!
//! Convolutions go through im2col + GEMM. The three convolution
//! primitives (`conv_forward`, `conv_backward_input`,
//! `conv_backward_kernel`) also implement the transposed convolution,
//! which is the input-gradient of a convolution with swapped roles.

use crate::error::{Error, Result};

use super::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    /// Zero padding with output size `ceil(in / stride)`.
    Same,
    /// No padding, output size `floor((in - k) / stride) + 1`.
    Valid,
}

/// Geometry of one cross-correlation `x[cin, h, w] -> y[cout, oh, ow]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub cout: usize,
    pub kh: usize,
    pub kw: usize,
    pub sh: usize,
    pub sw: usize,
    pub pad_top: usize,
    pub pad_left: usize,
    pub oh: usize,
    pub ow: usize,
}

fn same_pad(input: usize, output: usize, k: usize, s: usize) -> usize {
    ((output - 1) * s + k).saturating_sub(input) / 2
}

impl ConvGeom {
    /// Geometry of `conv2d` given input `[_, cin, h, w]` and kernel
    /// `[cout, cin, kh, kw]`.
    pub fn conv(
        input: [usize; 4],
        kernel: [usize; 4],
        stride: (usize, usize),
        padding: Padding,
    ) -> Result<Self> {
        let [_, cin, h, w] = input;
        let [cout, kcin, kh, kw] = kernel;
        if kcin != cin {
            return Err(Error::shape(
                "conv2d",
                format!("input has {cin} channels but kernel expects {kcin}"),
            ));
        }
        let (sh, sw) = stride;
        if sh == 0 || sw == 0 {
            return Err(Error::shape("conv2d", "stride must be at least 1"));
        }
        let (oh, ow, pad_top, pad_left) = match padding {
            Padding::Same => {
                if kh % 2 == 0 || kw % 2 == 0 {
                    return Err(Error::shape(
                        "conv2d",
                        format!("same padding needs odd kernel dims, got {kh}x{kw}"),
                    ));
                }
                let oh = h.div_ceil(sh);
                let ow = w.div_ceil(sw);
                (oh, ow, same_pad(h, oh, kh, sh), same_pad(w, ow, kw, sw))
            }
            Padding::Valid => {
                if h < kh || w < kw {
                    return Err(Error::shape(
                        "conv2d",
                        format!("kernel {kh}x{kw} larger than input {h}x{w} with valid padding"),
                    ));
                }
                ((h - kh) / sh + 1, (w - kw) / sw + 1, 0, 0)
            }
        };
        Ok(ConvGeom {
            cin,
            h,
            w,
            cout,
            kh,
            kw,
            sh,
            sw,
            pad_top,
            pad_left,
            oh,
            ow,
        })
    }

    /// Geometry of the convolution whose input-gradient is the transposed
    /// convolution of input `[_, cin, h, w]` with kernel `[cin, cout, kh, kw]`.
    /// The transposed output is `[_, cout, h * sh, w * sw]`.
    pub fn transposed(
        input: [usize; 4],
        kernel: [usize; 4],
        stride: (usize, usize),
    ) -> Result<Self> {
        let [_, cin, h, w] = input;
        let [kcin, cout, kh, kw] = kernel;
        if kcin != cin {
            return Err(Error::shape(
                "conv2d_transposed",
                format!("input has {cin} channels but kernel expects {kcin}"),
            ));
        }
        let (sh, sw) = stride;
        if sh == 0 || sw == 0 {
            return Err(Error::shape("conv2d_transposed", "stride must be at least 1"));
        }
        let (big_h, big_w) = (h * sh, w * sw);
        Ok(ConvGeom {
            cin: cout,
            h: big_h,
            w: big_w,
            cout: cin,
            kh,
            kw,
            sh,
            sw,
            pad_top: same_pad(big_h, h, kh, sh),
            pad_left: same_pad(big_w, w, kw, sw),
            oh: h,
            ow: w,
        })
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1
            && self.kw == 1
            && self.sh == 1
            && self.sw == 1
            && self.pad_top == 0
            && self.pad_left == 0
    }

    pub fn in_plane(&self) -> usize {
        self.cin * self.h * self.w
    }

    pub fn out_plane(&self) -> usize {
        self.cout * self.oh * self.ow
    }

    fn col_rows(&self) -> usize {
        self.cin * self.kh * self.kw
    }

    fn col_cols(&self) -> usize {
        self.oh * self.ow
    }

    /// Input column for output column `o` and kernel tap `k`, if inside.
    #[cfg(test)]
    fn src_x(&self, o: usize, k: usize) -> Option<usize> {
        let i = (o * self.sw + k) as isize - self.pad_left as isize;
        (i >= 0 && (i as usize) < self.w).then_some(i as usize)
    }

    /// Output columns `lo..hi` whose tap `k` lands inside the input row.
    fn x_span(&self, k: usize) -> (usize, usize) {
        let start = self.pad_left.saturating_sub(k).div_ceil(self.sw).min(self.ow);
        let end = if self.w + self.pad_left > k {
            ((self.w + self.pad_left - k - 1) / self.sw + 1).min(self.ow)
        } else {
            0
        };
        (start, end.max(start))
    }

    #[inline]
    fn src_y(&self, o: usize, k: usize) -> Option<usize> {
        let i = (o * self.sh + k) as isize - self.pad_top as isize;
        (i >= 0 && (i as usize) < self.h).then_some(i as usize)
    }
}

fn im2col<T: Scalar>(x: &[T], g: &ConvGeom, cols: &mut [T]) {
    let ohw = g.col_cols();
    for c in 0..g.cin {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = ((c * g.kh + ki) * g.kw + kj) * ohw;
                let (lo, hi) = g.x_span(kj);
                for oy in 0..g.oh {
                    let dst = &mut cols[row + oy * g.ow..row + (oy + 1) * g.ow];
                    let Some(iy) = g.src_y(oy, ki) else {
                        dst.fill(T::zero());
                        continue;
                    };
                    let src = &plane[iy * g.w..(iy + 1) * g.w];
                    dst[..lo].fill(T::zero());
                    dst[hi..].fill(T::zero());
                    let first = lo * g.sw + kj - g.pad_left;
                    if g.sw == 1 {
                        dst[lo..hi].copy_from_slice(&src[first..first + hi - lo]);
                    } else {
                        for (d, &v) in dst[lo..hi].iter_mut().zip(src[first..].iter().step_by(g.sw)) {
                            *d = v;
                        }
                    }
                }
            }
        }
    }
}

fn col2im<T: Scalar>(cols: &[T], g: &ConvGeom, x: &mut [T]) {
    let ohw = g.col_cols();
    for c in 0..g.cin {
        let plane = &mut x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = ((c * g.kh + ki) * g.kw + kj) * ohw;
                let (lo, hi) = g.x_span(kj);
                for oy in 0..g.oh {
                    let Some(iy) = g.src_y(oy, ki) else { continue };
                    let src = &cols[row + oy * g.ow + lo..row + oy * g.ow + hi];
                    let first = lo * g.sw + kj - g.pad_left;
                    let dst = &mut plane[iy * g.w + first..(iy + 1) * g.w];
                    for (d, &v) in dst.iter_mut().step_by(g.sw).zip(src) {
                        *d = *d + v;
                    }
                }
            }
        }
    }
}

/// `y[b] = K * x[b] (+ bias)` for a batch of `n` samples.
pub fn conv_forward<T: Scalar>(
    x: &[T],
    n: usize,
    kernel: &[T],
    bias: Option<&[T]>,
    g: &ConvGeom,
) -> Vec<T> {
    let (rows, ohw) = (g.col_rows(), g.col_cols());
    let mut y = vec![T::zero(); n * g.out_plane()];
    let mut cols = if g.is_pointwise() {
        Vec::new()
    } else {
        vec![T::zero(); rows * ohw]
    };
    for b in 0..n {
        let xs = &x[b * g.in_plane()..(b + 1) * g.in_plane()];
        let ys = &mut y[b * g.out_plane()..(b + 1) * g.out_plane()];
        if let Some(bias) = bias {
            for (co, chunk) in ys.chunks_mut(ohw).enumerate() {
                chunk.fill(bias[co]);
            }
        }
        let beta = if bias.is_some() { T::one() } else { T::zero() };
        let src: &[T] = if g.is_pointwise() {
            xs
        } else {
            im2col(xs, g, &mut cols);
            &cols
        };
        T::gemm(
            g.cout,
            rows,
            ohw,
            T::one(),
            kernel,
            rows as isize,
            1,
            src,
            ohw as isize,
            1,
            beta,
            ys,
            ohw as isize,
            1,
        );
    }
    y
}

/// Gradient of `conv_forward` with respect to its input.
pub fn conv_backward_input<T: Scalar>(dy: &[T], n: usize, kernel: &[T], g: &ConvGeom) -> Vec<T> {
    let (rows, ohw) = (g.col_rows(), g.col_cols());
    let mut dx = vec![T::zero(); n * g.in_plane()];
    let mut dcols = if g.is_pointwise() {
        Vec::new()
    } else {
        vec![T::zero(); rows * ohw]
    };
    for b in 0..n {
        let dys = &dy[b * g.out_plane()..(b + 1) * g.out_plane()];
        let dxs = &mut dx[b * g.in_plane()..(b + 1) * g.in_plane()];
        // kernel^T is rows x cout: element (r, co) at co * rows + r
        if g.is_pointwise() {
            T::gemm(
                rows, g.cout, ohw, T::one(), kernel, 1, rows as isize, dys, ohw as isize, 1,
                T::zero(), dxs, ohw as isize, 1,
            );
        } else {
            T::gemm(
                rows, g.cout, ohw, T::one(), kernel, 1, rows as isize, dys, ohw as isize, 1,
                T::zero(), &mut dcols, ohw as isize, 1,
            );
            col2im(&dcols, g, dxs);
        }
    }
    dx
}

/// Gradient of `conv_forward` with respect to the kernel, and the bias
/// gradient (per-output-channel sum of `dy`).
pub fn conv_backward_kernel<T: Scalar>(
    x: &[T],
    dy: &[T],
    n: usize,
    g: &ConvGeom,
) -> (Vec<T>, Vec<T>) {
    let (rows, ohw) = (g.col_rows(), g.col_cols());
    let mut dk = vec![T::zero(); g.cout * rows];
    let mut dbias = vec![T::zero(); g.cout];
    let mut cols = if g.is_pointwise() {
        Vec::new()
    } else {
        vec![T::zero(); rows * ohw]
    };
    for b in 0..n {
        let xs = &x[b * g.in_plane()..(b + 1) * g.in_plane()];
        let dys = &dy[b * g.out_plane()..(b + 1) * g.out_plane()];
        for (co, chunk) in dys.chunks(ohw).enumerate() {
            dbias[co] = chunk.iter().fold(dbias[co], |acc, &v| acc + v);
        }
        let src: &[T] = if g.is_pointwise() {
            xs
        } else {
            im2col(xs, g, &mut cols);
            &cols
        };
        // cols^T is ohw x rows: element (p, r) at r * ohw + p
        T::gemm(
            g.cout, ohw, rows, T::one(), dys, ohw as isize, 1, src, 1, ohw as isize, T::one(),
            &mut dk, rows as isize, 1,
        );
    }
    (dk, dbias)
}

pub(crate) fn check_divisible(
    op: &'static str,
    axis: &'static str,
    size: usize,
    factor: usize,
) -> Result<()> {
    if factor == 0 || size % factor != 0 {
        return Err(Error::Divisibility {
            op,
            axis,
            size,
            factor,
        });
    }
    Ok(())
}

/// Non-overlapping max-pool. Returns the pooled values and, for each
/// output, the flat input index of its (first, row-major) maximum.
pub fn maxpool_forward<T: Scalar>(
    x: &[T],
    dims: [usize; 4],
    kernel: (usize, usize),
) -> Result<(Vec<T>, Vec<usize>)> {
    let [n, c, h, w] = dims;
    let (kh, kw) = kernel;
    check_divisible("maxpool2d", "height", h, kh)?;
    check_divisible("maxpool2d", "width", w, kw)?;
    let (oh, ow) = (h / kh, w / kw);
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut argmax = Vec::with_capacity(n * c * oh * ow);
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best_idx = base + oy * kh * w + ox * kw;
                let mut best = x[best_idx];
                for dy in 0..kh {
                    let row = base + (oy * kh + dy) * w + ox * kw;
                    for (dx, &v) in x[row..row + kw].iter().enumerate() {
                        if v > best {
                            best = v;
                            best_idx = row + dx;
                        }
                    }
                }
                out.push(best);
                argmax.push(best_idx);
            }
        }
    }
    Ok((out, argmax))
}

pub fn maxpool_backward<T: Scalar>(dy: &[T], argmax: &[usize], input_len: usize) -> Vec<T> {
    let mut dx = vec![T::zero(); input_len];
    for (&g, &i) in dy.iter().zip(argmax) {
        dx[i] = dx[i] + g;
    }
    dx
}

/// Per-axis linear interpolation taps for half-pixel-centred up-sampling.
#[derive(Clone, Debug)]
struct AxisTaps {
    lo: Vec<usize>,
    hi: Vec<usize>,
    w_hi: Vec<f64>,
}

impl AxisTaps {
    fn new(len: usize, factor: usize) -> Self {
        let out = len * factor;
        let mut taps = AxisTaps {
            lo: Vec::with_capacity(out),
            hi: Vec::with_capacity(out),
            w_hi: Vec::with_capacity(out),
        };
        let max = (len - 1) as f64;
        for o in 0..out {
            let src = ((o as f64 + 0.5) / factor as f64 - 0.5).clamp(0.0, max);
            let lo = src.floor() as usize;
            taps.lo.push(lo);
            taps.hi.push((lo + 1).min(len - 1));
            taps.w_hi.push(src - lo as f64);
        }
        taps
    }
}

pub fn bilinear_forward<T: Scalar>(x: &[T], dims: [usize; 4], factor: (usize, usize)) -> Vec<T> {
    let [n, c, h, w] = dims;
    let (fh, fw) = factor;
    let (oh, ow) = (h * fh, w * fw);
    let ty = AxisTaps::new(h, fh);
    let tx = AxisTaps::new(w, fw);
    let wy: Vec<T> = ty.w_hi.iter().map(|&v| T::from_f64_lossy(v)).collect();
    let wx: Vec<T> = tx.w_hi.iter().map(|&v| T::from_f64_lossy(v)).collect();
    let mut out = vec![T::zero(); n * c * oh * ow];
    let mut rows = vec![T::zero(); h * ow];
    for plane in 0..n * c {
        let src = &x[plane * h * w..(plane + 1) * h * w];
        for iy in 0..h {
            let s = &src[iy * w..(iy + 1) * w];
            for ox in 0..ow {
                let a = wx[ox];
                rows[iy * ow + ox] = s[tx.lo[ox]] * (T::one() - a) + s[tx.hi[ox]] * a;
            }
        }
        let dst = &mut out[plane * oh * ow..(plane + 1) * oh * ow];
        for oy in 0..oh {
            let (lo, hi, b) = (ty.lo[oy], ty.hi[oy], wy[oy]);
            for ox in 0..ow {
                dst[oy * ow + ox] = rows[lo * ow + ox] * (T::one() - b) + rows[hi * ow + ox] * b;
            }
        }
    }
    out
}

pub fn bilinear_backward<T: Scalar>(dy: &[T], dims: [usize; 4], factor: (usize, usize)) -> Vec<T> {
    let [n, c, h, w] = dims;
    let (fh, fw) = factor;
    let (oh, ow) = (h * fh, w * fw);
    let ty = AxisTaps::new(h, fh);
    let tx = AxisTaps::new(w, fw);
    let wy: Vec<T> = ty.w_hi.iter().map(|&v| T::from_f64_lossy(v)).collect();
    let wx: Vec<T> = tx.w_hi.iter().map(|&v| T::from_f64_lossy(v)).collect();
    let mut dx = vec![T::zero(); n * c * h * w];
    let mut rows = vec![T::zero(); h * ow];
    for plane in 0..n * c {
        rows.fill(T::zero());
        let g = &dy[plane * oh * ow..(plane + 1) * oh * ow];
        for oy in 0..oh {
            let (lo, hi, b) = (ty.lo[oy], ty.hi[oy], wy[oy]);
            for ox in 0..ow {
                let v = g[oy * ow + ox];
                rows[lo * ow + ox] = rows[lo * ow + ox] + v * (T::one() - b);
                rows[hi * ow + ox] = rows[hi * ow + ox] + v * b;
            }
        }
        let dst = &mut dx[plane * h * w..(plane + 1) * h * w];
        for iy in 0..h {
            for ox in 0..ow {
                let v = rows[iy * ow + ox];
                let a = wx[ox];
                let d = &mut dst[iy * w..(iy + 1) * w];
                d[tx.lo[ox]] = d[tx.lo[ox]] + v * (T::one() - a);
                d[tx.hi[ox]] = d[tx.hi[ox]] + v * a;
            }
        }
    }
    dx
}

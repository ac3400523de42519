//! 2-D convolution and its transpose via im2col / col2im.
//!
//! Weights are laid out `[kh * kw * in_c, out_c]` (patch-major, output
//! channel minor), so a forward pass is one GEMM of the patch matrix
//! against the weight matrix.

use serde::{Deserialize, Serialize};

use super::{add_col_sums, add_row_bias, matmul, Mat, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvGeom {
    pub in_h: usize,
    pub in_w: usize,
    pub in_c: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub out_c: usize,
    pub kh: usize,
    pub kw: usize,
    pub sh: usize,
    pub sw: usize,
    pub pad_h: usize,
    pub pad_w: usize,
}

fn same_pad(input: usize, k: usize, s: usize) -> (usize, usize) {
    let out = input.div_ceil(s);
    let total = ((out - 1) * s + k).saturating_sub(input);
    (out, total / 2)
}

impl ConvGeom {
    /// "Same" coverage: `out = ceil(in / stride)`, padding split with the
    /// smaller half first.
    pub fn same(in_h: usize, in_w: usize, in_c: usize, out_c: usize, kh: usize, kw: usize, stride: usize) -> Self {
        let (out_h, pad_h) = same_pad(in_h, kh, stride);
        let (out_w, pad_w) = same_pad(in_w, kw, stride);
        Self {
            in_h,
            in_w,
            in_c,
            out_h,
            out_w,
            out_c,
            kh,
            kw,
            sh: stride,
            sw: stride,
            pad_h,
            pad_w,
        }
    }

    /// "Valid" coverage: no padding, `out = (in - k) / stride + 1`.
    pub fn valid(in_h: usize, in_w: usize, in_c: usize, out_c: usize, kh: usize, kw: usize, stride: usize) -> Self {
        assert!(in_h >= kh && in_w >= kw, "kernel larger than input");
        Self {
            in_h,
            in_w,
            in_c,
            out_h: (in_h - kh) / stride + 1,
            out_w: (in_w - kw) / stride + 1,
            out_c,
            kh,
            kw,
            sh: stride,
            sw: stride,
            pad_h: 0,
            pad_w: 0,
        }
    }

    pub fn patch_len(&self) -> usize {
        self.kh * self.kw * self.in_c
    }

    pub fn in_len(&self) -> usize {
        self.in_h * self.in_w * self.in_c
    }

    pub fn out_len(&self) -> usize {
        self.out_h * self.out_w * self.out_c
    }

    pub fn out_positions(&self) -> usize {
        self.out_h * self.out_w
    }

    pub fn weight_shape(&self) -> Vec<usize> {
        vec![self.kh, self.kw, self.in_c, self.out_c]
    }

    /// Calls `f(col_offset, input_offset)` for every in-bounds tap of the
    /// patch at output position (`oh`, `ow`); taps cover `in_c` values.
    #[inline]
    fn for_each_tap(&self, oh: usize, ow: usize, mut f: impl FnMut(usize, usize)) {
        for ki in 0..self.kh {
            let ih = (oh * self.sh + ki) as isize - self.pad_h as isize;
            if ih < 0 || ih >= self.in_h as isize {
                continue;
            }
            for kj in 0..self.kw {
                let iw = (ow * self.sw + kj) as isize - self.pad_w as isize;
                if iw < 0 || iw >= self.in_w as isize {
                    continue;
                }
                let col = (ki * self.kw + kj) * self.in_c;
                let src = (ih as usize * self.in_w + iw as usize) * self.in_c;
                f(col, src);
            }
        }
    }
}

/// Patch matrix `[nb * out_positions, patch_len]`.
pub fn im2col<T: Scalar>(g: &ConvGeom, x: &[T], nb: usize) -> Vec<T> {
    let k = g.patch_len();
    let mut cols = vec![T::ZERO; nb * g.out_positions() * k];
    let c = g.in_c;
    for b in 0..nb {
        let xb = &x[b * g.in_len()..(b + 1) * g.in_len()];
        for oh in 0..g.out_h {
            for ow in 0..g.out_w {
                let row = ((b * g.out_h + oh) * g.out_w + ow) * k;
                let dst = &mut cols[row..row + k];
                g.for_each_tap(oh, ow, |col, src| dst[col..col + c].copy_from_slice(&xb[src..src + c]));
            }
        }
    }
    cols
}

/// Scatter-adds a patch matrix back onto an `nb x in_len` buffer.
pub fn col2im<T: Scalar>(g: &ConvGeom, cols: &[T], nb: usize, out: &mut [T]) {
    let k = g.patch_len();
    let c = g.in_c;
    for b in 0..nb {
        let ob = &mut out[b * g.in_len()..(b + 1) * g.in_len()];
        for oh in 0..g.out_h {
            for ow in 0..g.out_w {
                let row = ((b * g.out_h + oh) * g.out_w + ow) * k;
                let srow = &cols[row..row + k];
                g.for_each_tap(oh, ow, |col, dst| {
                    for (o, &v) in ob[dst..dst + c].iter_mut().zip(&srow[col..col + c]) {
                        *o += v;
                    }
                });
            }
        }
    }
}

/// Below this many output channels the patch matrix costs more than the
/// arithmetic, so convolutions loop over taps directly.
const DIRECT_MAX_OUT_C: usize = 4;

/// Dot product split over independent lanes so it vectorizes.
#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::ZERO; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: T = ca.remainder().iter().zip(cb.remainder()).map(|(&x, &y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    acc.iter().copied().sum::<T>() + tail
}

#[inline]
fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    for (o, &v) in y.iter_mut().zip(x) {
        *o += alpha * v;
    }
}

/// `[k, oc]` weights as `[oc, k]`.
fn transpose<T: Scalar>(w: &[T], k: usize, oc: usize) -> Vec<T> {
    let mut t = vec![T::ZERO; w.len()];
    for (r, row) in w.chunks(oc).enumerate().take(k) {
        for (o, &v) in row.iter().enumerate() {
            t[o * k + r] = v;
        }
    }
    t
}

fn direct_forward<T: Scalar>(g: &ConvGeom, w: &[T], bias: &[T], x: &[T], nb: usize) -> Vec<T> {
    let (c, k, oc) = (g.in_c, g.patch_len(), g.out_c);
    let wt = transpose(w, k, oc);
    let mut y = vec![T::ZERO; nb * g.out_len()];
    for b in 0..nb {
        let xb = &x[b * g.in_len()..(b + 1) * g.in_len()];
        for oh in 0..g.out_h {
            for ow in 0..g.out_w {
                let at = ((b * g.out_h + oh) * g.out_w + ow) * oc;
                for (o, yo) in y[at..at + oc].iter_mut().enumerate() {
                    let wo = &wt[o * k..(o + 1) * k];
                    let mut acc = bias[o];
                    g.for_each_tap(oh, ow, |col, src| acc += dot(&xb[src..src + c], &wo[col..col + c]));
                    *yo = acc;
                }
            }
        }
    }
    y
}

fn direct_backward<T: Scalar>(g: &ConvGeom, w: &[T], x: &[T], dy: &[T], nb: usize, param_grads: Option<(&mut [T], &mut [T])>, want_dx: bool) -> Option<Vec<T>> {
    let (c, k, oc) = (g.in_c, g.patch_len(), g.out_c);
    let wt = transpose(w, k, oc);
    let mut dwt = param_grads.is_some().then(|| vec![T::ZERO; k * oc]);
    let mut dx = want_dx.then(|| vec![T::ZERO; nb * g.in_len()]);
    for b in 0..nb {
        let range = b * g.in_len()..(b + 1) * g.in_len();
        let xb = &x[range.clone()];
        let mut dxb = dx.as_mut().map(|d| &mut d[range]);
        for oh in 0..g.out_h {
            for ow in 0..g.out_w {
                let at = ((b * g.out_h + oh) * g.out_w + ow) * oc;
                for (o, &d) in dy[at..at + oc].iter().enumerate() {
                    g.for_each_tap(oh, ow, |col, src| {
                        if let Some(dwt) = dwt.as_mut() {
                            axpy(d, &xb[src..src + c], &mut dwt[o * k + col..o * k + col + c]);
                        }
                        if let Some(dxb) = dxb.as_mut() {
                            axpy(d, &wt[o * k + col..o * k + col + c], &mut dxb[src..src + c]);
                        }
                    });
                }
            }
        }
    }
    if let (Some((dw, db)), Some(dwt)) = (param_grads, dwt) {
        for (o, row) in dwt.chunks(k).enumerate() {
            for (r, &v) in row.iter().enumerate() {
                dw[r * oc + o] += v;
            }
        }
        add_col_sums(dy, db);
    }
    dx
}

pub fn conv_forward<T: Scalar>(g: &ConvGeom, w: &[T], bias: &[T], x: &[T], nb: usize) -> Vec<T> {
    if g.out_c <= DIRECT_MAX_OUT_C {
        return direct_forward(g, w, bias, x, nb);
    }
    let cols = im2col(g, x, nb);
    let p = nb * g.out_positions();
    let mut y = vec![T::ZERO; p * g.out_c];
    matmul(Mat::new(&cols, p, g.patch_len()), Mat::new(w, g.patch_len(), g.out_c), &mut y, T::ZERO);
    add_row_bias(&mut y, bias);
    y
}

/// Accumulates weight/bias gradients into `param_grads` when given and
/// returns the input gradient when `want_dx`.
pub fn conv_backward<T: Scalar>(
    g: &ConvGeom,
    w: &[T],
    x: &[T],
    dy: &[T],
    nb: usize,
    param_grads: Option<(&mut [T], &mut [T])>,
    want_dx: bool,
) -> Option<Vec<T>> {
    if g.out_c <= DIRECT_MAX_OUT_C {
        return direct_backward(g, w, x, dy, nb, param_grads, want_dx);
    }
    let p = nb * g.out_positions();
    let k = g.patch_len();
    let dy_m = Mat::new(dy, p, g.out_c);
    if let Some((dw, db)) = param_grads {
        let cols = im2col(g, x, nb);
        matmul(Mat::new(&cols, p, k).t(), dy_m, dw, T::ONE);
        add_col_sums(dy, db);
    }
    want_dx.then(|| {
        let mut dcols = vec![T::ZERO; p * k];
        matmul(dy_m, Mat::new(w, k, g.out_c).t(), &mut dcols, T::ZERO);
        let mut dx = vec![T::ZERO; nb * g.in_len()];
        col2im(g, &dcols, nb, &mut dx);
        dx
    })
}

/// Transposed convolution: the adjoint of the convolution described by
/// `g`, mapping `g.out_*`-shaped inputs onto `g.in_*`-shaped outputs.
/// `bias` has `g.in_c` entries.
pub fn deconv_forward<T: Scalar>(g: &ConvGeom, w: &[T], bias: &[T], x: &[T], nb: usize) -> Vec<T> {
    let p = nb * g.out_positions();
    let k = g.patch_len();
    let mut cols = vec![T::ZERO; p * k];
    matmul(Mat::new(x, p, g.out_c), Mat::new(w, k, g.out_c).t(), &mut cols, T::ZERO);
    let mut y = vec![T::ZERO; nb * g.in_len()];
    col2im(g, &cols, nb, &mut y);
    add_row_bias(&mut y, bias);
    y
}

pub fn deconv_backward<T: Scalar>(
    g: &ConvGeom,
    w: &[T],
    x: &[T],
    dy: &[T],
    nb: usize,
    param_grads: Option<(&mut [T], &mut [T])>,
    want_dx: bool,
) -> Option<Vec<T>> {
    let p = nb * g.out_positions();
    let k = g.patch_len();
    let dcols = im2col(g, dy, nb);
    let dcols_m = Mat::new(&dcols, p, k);
    if let Some((dw, db)) = param_grads {
        matmul(dcols_m.t(), Mat::new(x, p, g.out_c), dw, T::ONE);
        add_col_sums(dy, db);
    }
    want_dx.then(|| {
        let mut dx = vec![T::ZERO; p * g.out_c];
        matmul(dcols_m, Mat::new(w, k, g.out_c), &mut dx, T::ZERO);
        dx
    })
}

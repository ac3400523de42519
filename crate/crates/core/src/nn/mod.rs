//! Minimal dense tensor kernels with hand-written backward passes.
//!
//! Activations are stored batch-major and channels-last (`N x H x W x C`,
//! row-major), matching the PBV reshape `1480 -> 20 x 74 x 1`. All matrix
//! work goes through [`matmul`], which wraps `matrixmultiply`.

pub mod act;
pub mod conv;
pub mod dense;
pub mod math;
mod params;
pub mod pool;

pub use params::{ParamEntry, ParamSet};

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

/// Floating-point element type. Training runs in `f32`; gradient checks
/// run the same code in `f64`.
pub trait Scalar:
    Copy
    + Default
    + Debug
    + PartialOrd
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + Sum
{
    const ZERO: Self;
    const ONE: Self;
    const BYTES: usize;

    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn tanh(self) -> Self;
    fn sqrt(self) -> Self;
    fn is_finite(self) -> bool;
    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(b: &[u8]) -> Self;

    /// `c = alpha * a * b + beta * c` on strided row/column views.
    ///
    /// # Safety
    /// Every index reachable through the dimensions and strides must be in
    /// bounds of the respective buffer.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );
}

macro_rules! impl_scalar {
    ($t:ty, $gemm:path) => {
        impl Scalar for $t {
            const ZERO: Self = 0.0;
            const ONE: Self = 1.0;
            const BYTES: usize = std::mem::size_of::<$t>();

            #[inline]
            fn from_f64(v: f64) -> Self {
                v as $t
            }
            #[inline]
            fn to_f64(self) -> f64 {
                self as f64
            }
            #[inline]
            fn tanh(self) -> Self {
                <$t>::tanh(self)
            }
            #[inline]
            fn sqrt(self) -> Self {
                <$t>::sqrt(self)
            }
            #[inline]
            fn is_finite(self) -> bool {
                <$t>::is_finite(self)
            }
            fn write_le(self, out: &mut Vec<u8>) {
                out.extend_from_slice(&self.to_le_bytes());
            }
            fn read_le(b: &[u8]) -> Self {
                <$t>::from_le_bytes(b.try_into().expect("scalar width"))
            }
            unsafe fn gemm_raw(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: *const Self,
                rsa: isize,
                csa: isize,
                b: *const Self,
                rsb: isize,
                csb: isize,
                beta: Self,
                c: *mut Self,
                rsc: isize,
                csc: isize,
            ) {
                $gemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
            }
        }
    };
}

impl_scalar!(f32, matrixmultiply::sgemm);
impl_scalar!(f64, matrixmultiply::dgemm);

/// Read-only matrix view over a row-major buffer, optionally transposed.
#[derive(Debug, Clone, Copy)]
pub struct Mat<'a, T> {
    data: &'a [T],
    rows: usize,
    cols: usize,
    rs: isize,
    cs: isize,
}

impl<'a, T: Scalar> Mat<'a, T> {
    pub fn new(data: &'a [T], rows: usize, cols: usize) -> Self {
        assert!(data.len() >= rows * cols, "matrix view {rows}x{cols} over {} elements", data.len());
        Self {
            data,
            rows,
            cols,
            rs: cols as isize,
            cs: 1,
        }
    }

    pub fn t(self) -> Self {
        Self {
            data: self.data,
            rows: self.cols,
            cols: self.rows,
            rs: self.cs,
            cs: self.rs,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }
}

/// `out = a * b + beta * out`, `out` row-major `a.rows x b.cols`.
pub fn matmul<T: Scalar>(a: Mat<'_, T>, b: Mat<'_, T>, out: &mut [T], beta: T) {
    assert_eq!(a.cols, b.rows, "inner dimensions differ");
    assert!(out.len() >= a.rows * b.cols);
    if a.rows == 0 || b.cols == 0 {
        return;
    }
    if a.cols == 0 {
        for v in &mut out[..a.rows * b.cols] {
            *v *= beta;
        }
        return;
    }
    // SAFETY: `Mat::new` checked each buffer covers rows*cols elements and
    // the strides describe exactly that row-major (or transposed) layout;
    // `out` was checked above.
    unsafe {
        T::gemm_raw(
            a.rows,
            a.cols,
            b.cols,
            T::ONE,
            a.data.as_ptr(),
            a.rs,
            a.cs,
            b.data.as_ptr(),
            b.rs,
            b.cs,
            beta,
            out.as_mut_ptr(),
            b.cols as isize,
            1,
        )
    }
}

/// Adds `bias` to every row of a row-major `rows x bias.len()` buffer.
pub fn add_row_bias<T: Scalar>(y: &mut [T], bias: &[T]) {
    for row in y.chunks_exact_mut(bias.len()) {
        for (v, &b) in row.iter_mut().zip(bias) {
            *v += b;
        }
    }
}

/// Column sums of a row-major buffer, accumulated into `out`.
pub fn add_col_sums<T: Scalar>(dy: &[T], out: &mut [T]) {
    for row in dy.chunks_exact(out.len()) {
        for (o, &v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    c[i * n + j] += a[i * k + p] * b[p * n + j];
                }
            }
        }
        c
    }

    #[test]
    fn matmul_matches_naive_including_transposes() {
        let a: Vec<f64> = (0..6).map(|v| v as f64 - 2.0).collect(); // 2x3
        let b: Vec<f64> = (0..12).map(|v| (v as f64) * 0.5).collect(); // 3x4
        let mut c = vec![0.0; 8];
        matmul(Mat::new(&a, 2, 3), Mat::new(&b, 3, 4), &mut c, 0.0);
        assert_eq!(c, naive(&a, &b, 2, 3, 4));

        // (b^T)^T = b, a^T stored as 3x2
        let at: Vec<f64> = vec![a[0], a[3], a[1], a[4], a[2], a[5]];
        let mut c2 = vec![1.0; 8];
        matmul(Mat::new(&at, 3, 2).t(), Mat::new(&b, 3, 4), &mut c2, 1.0);
        let want: Vec<f64> = naive(&a, &b, 2, 3, 4).iter().map(|v| v + 1.0).collect();
        assert_eq!(c2, want);
    }
}

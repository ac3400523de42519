//! 1-D max pooling along the width axis of `N x W x C` activations.

use super::Scalar;

pub fn pooled_len(width: usize, size: usize, stride: usize) -> usize {
    assert!(width >= size, "pool window {size} wider than input {width}");
    (width - size) / stride + 1
}

/// Returns the pooled activations and, for each output, the flat input
/// index that won.
pub fn max_pool_forward<T: Scalar>(x: &[T], nb: usize, width: usize, c: usize, size: usize, stride: usize) -> (Vec<T>, Vec<u32>) {
    let out_w = pooled_len(width, size, stride);
    let mut y = vec![T::ZERO; nb * out_w * c];
    let mut arg = vec![0u32; nb * out_w * c];
    for b in 0..nb {
        let xb = b * width * c;
        for o in 0..out_w {
            let dst = (b * out_w + o) * c;
            let first = xb + o * stride * c;
            y[dst..dst + c].copy_from_slice(&x[first..first + c]);
            for (k, a) in arg[dst..dst + c].iter_mut().enumerate() {
                *a = (first + k) as u32;
            }
            for p in 1..size {
                let src = first + p * c;
                for k in 0..c {
                    let v = x[src + k];
                    if v > y[dst + k] {
                        y[dst + k] = v;
                        arg[dst + k] = (src + k) as u32;
                    }
                }
            }
        }
    }
    (y, arg)
}

pub fn max_pool_backward<T: Scalar>(dy: &[T], arg: &[u32], input_len: usize) -> Vec<T> {
    let mut dx = vec![T::ZERO; input_len];
    for (&g, &a) in dy.iter().zip(arg) {
        dx[a as usize] += g;
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pooling_picks_window_maxima() {
        // one sample, width 6, 2 channels interleaved
        let x = [1.0, 9.0, 5.0, 1.0, 2.0, 2.0, 7.0, 0.0, 3.0, 3.0, 0.0, 8.0];
        let (y, arg) = max_pool_forward(&x, 1, 6, 2, 3, 1);
        assert_eq!(y, vec![5.0, 9.0, 7.0, 2.0, 7.0, 3.0, 7.0, 8.0]);
        let dx = max_pool_backward(&[1.0; 8], &arg, 12);
        assert_eq!(dx[6], 3.0);
        assert_eq!(dx[1], 1.0);
        assert_eq!(pooled_len(1460, 35, 1), 1426);
    }
}

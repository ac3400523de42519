//! Elementwise activations. Backward passes read the forward *output*,
//! which determines the local slope for every activation used here.

use super::Scalar;

pub fn leaky_relu<T: Scalar>(x: &mut [T], slope: T) {
    for v in x {
        if *v < T::ZERO {
            *v *= slope;
        }
    }
}

pub fn leaky_relu_backward<T: Scalar>(y: &[T], dy: &mut [T], slope: T) {
    for (g, &o) in dy.iter_mut().zip(y) {
        if o < T::ZERO {
            *g *= slope;
        }
    }
}

pub fn relu<T: Scalar>(x: &mut [T]) {
    for v in x {
        if *v < T::ZERO {
            *v = T::ZERO;
        }
    }
}

pub fn relu_backward<T: Scalar>(y: &[T], dy: &mut [T]) {
    for (g, &o) in dy.iter_mut().zip(y) {
        if o <= T::ZERO {
            *g = T::ZERO;
        }
    }
}

pub fn tanh<T: Scalar>(x: &mut [T]) {
    for v in x {
        *v = v.tanh();
    }
}

pub fn tanh_backward<T: Scalar>(y: &[T], dy: &mut [T]) {
    for (g, &o) in dy.iter_mut().zip(y) {
        *g *= T::ONE - o * o;
    }
}

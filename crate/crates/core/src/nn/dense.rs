use super::{add_col_sums, add_row_bias, matmul, Mat, Scalar};

/// `y = x W + b` with `W` laid out `[inputs, outputs]`.
pub fn dense_forward<T: Scalar>(w: &[T], bias: &[T], x: &[T], nb: usize, inputs: usize) -> Vec<T> {
    let outputs = bias.len();
    let mut y = vec![T::ZERO; nb * outputs];
    matmul(Mat::new(x, nb, inputs), Mat::new(w, inputs, outputs), &mut y, T::ZERO);
    add_row_bias(&mut y, bias);
    y
}

pub fn dense_backward<T: Scalar>(
    w: &[T],
    x: &[T],
    dy: &[T],
    nb: usize,
    inputs: usize,
    param_grads: Option<(&mut [T], &mut [T])>,
    want_dx: bool,
) -> Option<Vec<T>> {
    let outputs = dy.len() / nb.max(1);
    let dy_m = Mat::new(dy, nb, outputs);
    if let Some((dw, db)) = param_grads {
        matmul(Mat::new(x, nb, inputs).t(), dy_m, dw, T::ONE);
        add_col_sums(dy, db);
    }
    want_dx.then(|| {
        let mut dx = vec![T::ZERO; nb * inputs];
        matmul(dy_m, Mat::new(w, inputs, outputs).t(), &mut dx, T::ZERO);
        dx
    })
}

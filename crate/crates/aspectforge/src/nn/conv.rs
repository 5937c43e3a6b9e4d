//! 1-D convolution over a token sequence with global max pooling.
//!
//! Kernels are stored flattened, one `k*d` row per filter, so a window is
//! exactly a contiguous slice of the row-major `L x d` input. Valid padding,
//! stride 1; pooling keeps the maximum response per filter and, on ties,
//! the earliest window.

use super::matrix::{add_scaled, dot, Matrix};
use crate::{Error, Result};

#[derive(Debug)]
pub struct ConvTape {
    x: Matrix,
    argmax: Vec<usize>,
    kernel_size: usize,
}

/// Returns the pooled feature vector (one value per filter) and the tape.
pub fn conv_maxpool_forward(
    x: Matrix,
    kernels: &Matrix,
    bias: &[f64],
    kernel_size: usize,
) -> Result<(Vec<f64>, ConvTape)> {
    let (seq_len, dim) = x.shape();
    if kernel_size == 0 || seq_len < kernel_size {
        return Err(Error::invalid(format!(
            "kernel size {kernel_size} does not fit sequence of length {seq_len}"
        )));
    }
    if kernels.cols() != kernel_size * dim {
        return Err(Error::shape(format!(
            "kernel width {} does not match kernel_size*dim = {}",
            kernels.cols(),
            kernel_size * dim
        )));
    }
    if bias.len() != kernels.rows() {
        return Err(Error::shape("convolution bias length differs from filter count"));
    }

    let n_windows = seq_len - kernel_size + 1;
    let n_filters = kernels.rows();
    let mut pooled = vec![0.0; n_filters];
    let mut argmax = vec![0; n_filters];
    for f in 0..n_filters {
        let kernel = kernels.row(f);
        let mut best = f64::NEG_INFINITY;
        let mut best_p = 0;
        for p in 0..n_windows {
            let window = &x.data()[p * dim..(p + kernel_size) * dim];
            let score = dot(kernel, window) + bias[f];
            if score > best {
                best = score;
                best_p = p;
            }
        }
        if !best.is_finite() {
            return Err(Error::non_finite(format!("convolution filter {f}")));
        }
        pooled[f] = best;
        argmax[f] = best_p;
    }
    let tape = ConvTape {
        x,
        argmax,
        kernel_size,
    };
    Ok((pooled, tape))
}

/// Routes each filter's gradient through its argmax window only.
/// Returns (d_x, d_kernels, d_bias).
pub fn conv_maxpool_backward(
    tape: ConvTape,
    kernels: &Matrix,
    d_pooled: &[f64],
) -> (Matrix, Matrix, Vec<f64>) {
    let (seq_len, dim) = tape.x.shape();
    let k = tape.kernel_size;
    assert_eq!(d_pooled.len(), kernels.rows(), "pooled grad length mismatch");

    let mut d_x = Matrix::zeros(seq_len, dim);
    let mut d_kernels = Matrix::zeros(kernels.rows(), kernels.cols());
    let mut d_bias = vec![0.0; kernels.rows()];
    for (f, &g) in d_pooled.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        let p = tape.argmax[f];
        let window = &tape.x.data()[p * dim..(p + k) * dim];
        add_scaled(d_kernels.row_mut(f), window, g);
        add_scaled(&mut d_x.data_mut()[p * dim..(p + k) * dim], kernels.row(f), g);
        d_bias[f] += g;
    }
    (d_x, d_kernels, d_bias)
}

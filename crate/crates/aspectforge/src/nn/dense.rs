//! Fully connected layer over a single feature vector.

use super::matrix::{add_scaled, Matrix};
use super::sigmoid;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Identity,
}

#[derive(Debug)]
pub struct DenseTape {
    input: Vec<f64>,
    output: Vec<f64>,
    activation: Activation,
}

/// `activation(w * v + b)`; with `Sigmoid` every output is strictly in (0, 1).
pub fn dense_forward(
    v: &[f64],
    w: &Matrix,
    b: &[f64],
    activation: Activation,
) -> Result<(Vec<f64>, DenseTape)> {
    if v.len() != w.cols() {
        return Err(Error::shape(format!(
            "dense input length {} != weight columns {}",
            v.len(),
            w.cols()
        )));
    }
    if b.len() != w.rows() {
        return Err(Error::shape(format!(
            "dense bias length {} != weight rows {}",
            b.len(),
            w.rows()
        )));
    }
    let mut out = w.matvec(v);
    for (o, &bi) in out.iter_mut().zip(b) {
        *o += bi;
        if let Activation::Sigmoid = activation {
            *o = sigmoid(*o);
        }
    }
    if !out.iter().all(|x| x.is_finite()) {
        return Err(Error::non_finite("dense layer output"));
    }
    let tape = DenseTape {
        input: v.to_vec(),
        output: out.clone(),
        activation,
    };
    Ok((out, tape))
}

/// Returns (d_input, d_w, d_b).
pub fn dense_backward(tape: &DenseTape, w: &Matrix, d_out: &[f64]) -> (Vec<f64>, Matrix, Vec<f64>) {
    assert_eq!(d_out.len(), w.rows(), "dense output grad length mismatch");
    // Pre-activation gradient; sigmoid' expressed through the stored output.
    let d_pre: Vec<f64> = match tape.activation {
        Activation::Sigmoid => d_out
            .iter()
            .zip(&tape.output)
            .map(|(&g, &y)| g * y * (1.0 - y))
            .collect(),
        Activation::Identity => d_out.to_vec(),
    };

    let mut d_input = vec![0.0; w.cols()];
    w.add_matvec_transpose(&d_pre, &mut d_input);
    let mut d_w = Matrix::zeros(w.rows(), w.cols());
    d_w.add_outer(&d_pre, &tape.input);
    let mut d_b = vec![0.0; w.rows()];
    add_scaled(&mut d_b, &d_pre, 1.0);
    (d_input, d_w, d_b)
}

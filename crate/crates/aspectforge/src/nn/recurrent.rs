//! Recurrent sequence encoders: LSTM, GRU, and a bidirectional LSTM.
//!
//! Each gate owns a single `H x (H + d)` matrix applied to the
//! concatenation `[h_prev, x_t]`, so hidden-to-hidden and input-to-hidden
//! weights live side by side in one tensor. The encoders consume the whole
//! sequence, including padding steps, and expose only the final hidden
//! state. Backward passes unroll the same recursion in reverse.
//!
//! LSTM step:
//!   f_t = sigmoid(W_f [h_{t-1}, x_t] + b_f)
//!   i_t = sigmoid(W_i [h_{t-1}, x_t] + b_i)
//!   g_t = tanh   (W_c [h_{t-1}, x_t] + b_c)
//!   o_t = sigmoid(W_o [h_{t-1}, x_t] + b_o)
//!   c_t = f_t * c_{t-1} + i_t * g_t
//!   h_t = o_t * tanh(c_t)
//!
//! GRU step (no bias terms):
//!   z_t = sigmoid(W_z [h_{t-1}, x_t])
//!   r_t = sigmoid(W_r [h_{t-1}, x_t])
//!   g_t = tanh   (W_h [r_t * h_{t-1}, x_t])
//!   h_t = (1 - z_t) * h_{t-1} + z_t * g_t
//!
//! Initial hidden and cell states are zero.

// Indexed loops over parallel per-timestep arrays mirror the recurrence.
#![allow(clippy::needless_range_loop)]

use super::matrix::{add_scaled, dot, Matrix};
use super::{sigmoid, tanh};
use crate::{Error, Result};

/// Borrowed LSTM weights; biases are slices over 1-row matrices.
pub struct LstmWeights<'a> {
    pub w_f: &'a Matrix,
    pub w_i: &'a Matrix,
    pub w_c: &'a Matrix,
    pub w_o: &'a Matrix,
    pub b_f: &'a [f64],
    pub b_i: &'a [f64],
    pub b_c: &'a [f64],
    pub b_o: &'a [f64],
}

/// Owned LSTM gradients, same shapes as the weights.
pub struct LstmGrads {
    pub w_f: Matrix,
    pub w_i: Matrix,
    pub w_c: Matrix,
    pub w_o: Matrix,
    pub b_f: Vec<f64>,
    pub b_i: Vec<f64>,
    pub b_c: Vec<f64>,
    pub b_o: Vec<f64>,
}

#[derive(Debug)]
pub struct LstmTape {
    x: Matrix,
    h: Matrix,      // (L+1) x H, row 0 is the zero initial state
    c: Matrix,      // (L+1) x H
    f: Matrix,      // L x H
    i: Matrix,
    g: Matrix,      // candidate cell values (tanh)
    o: Matrix,
    tanh_c: Matrix, // tanh(c_t) per step
}

pub struct GruWeights<'a> {
    pub w_z: &'a Matrix,
    pub w_r: &'a Matrix,
    pub w_h: &'a Matrix,
}

pub struct GruGrads {
    pub w_z: Matrix,
    pub w_r: Matrix,
    pub w_h: Matrix,
}

#[derive(Debug)]
pub struct GruTape {
    x: Matrix,
    h: Matrix,  // (L+1) x H
    z: Matrix,  // L x H
    r: Matrix,
    g: Matrix,  // candidate states (tanh)
    rh: Matrix, // r_t * h_{t-1} per step
}

#[derive(Debug)]
pub struct BiLstmTape {
    fwd: LstmTape,
    bwd: LstmTape,
}

fn check_gate_shapes(hidden: usize, width: usize, gates: &[(&str, &Matrix)]) -> Result<()> {
    for (name, w) in gates {
        if w.shape() != (hidden, width) {
            return Err(Error::shape(format!(
                "gate {name} has shape {:?}, expected ({hidden}, {width})",
                w.shape()
            )));
        }
    }
    Ok(())
}

/// `out = w * [h, x] + b` where each row of `w` is split at `h.len()`.
fn gate_preact(w: &Matrix, h: &[f64], x: &[f64], b: Option<&[f64]>, out: &mut [f64]) {
    let split = h.len();
    for (r, o) in out.iter_mut().enumerate() {
        let row = w.row(r);
        let mut a = dot(&row[..split], h) + dot(&row[split..], x);
        if let Some(b) = b {
            a += b[r];
        }
        *o = a;
    }
}

/// `dh += w[:, :H]^T da` and `dx += w[:, H:]^T da`.
fn add_concat_matvec_t(w: &Matrix, da: &[f64], dh: &mut [f64], dx: &mut [f64]) {
    let split = dh.len();
    for (r, &a) in da.iter().enumerate() {
        if a != 0.0 {
            let row = w.row(r);
            add_scaled(dh, &row[..split], a);
            add_scaled(dx, &row[split..], a);
        }
    }
}

/// `dw += da * [h, x]^T`.
fn add_outer_concat(dw: &mut Matrix, da: &[f64], h: &[f64], x: &[f64]) {
    let split = h.len();
    for (r, &a) in da.iter().enumerate() {
        if a != 0.0 {
            let row = dw.row_mut(r);
            add_scaled(&mut row[..split], h, a);
            add_scaled(&mut row[split..], x, a);
        }
    }
}

fn reverse_rows(m: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(m.rows(), m.cols());
    for t in 0..m.rows() {
        out.row_mut(t).copy_from_slice(m.row(m.rows() - 1 - t));
    }
    out
}

/// Runs the LSTM over the full sequence and returns the final hidden state.
pub fn lstm_sequence_forward(x: Matrix, w: &LstmWeights) -> Result<(Vec<f64>, LstmTape)> {
    let (seq_len, dim) = x.shape();
    if seq_len == 0 {
        return Err(Error::invalid("recurrent layer on empty sequence"));
    }
    let hidden = w.w_f.rows();
    check_gate_shapes(
        hidden,
        hidden + dim,
        &[("w_f", w.w_f), ("w_i", w.w_i), ("w_c", w.w_c), ("w_o", w.w_o)],
    )?;
    for (name, b) in [("b_f", w.b_f), ("b_i", w.b_i), ("b_c", w.b_c), ("b_o", w.b_o)] {
        if b.len() != hidden {
            return Err(Error::shape(format!("bias {name} length {} != {hidden}", b.len())));
        }
    }

    let mut tape = LstmTape {
        x,
        h: Matrix::zeros(seq_len + 1, hidden),
        c: Matrix::zeros(seq_len + 1, hidden),
        f: Matrix::zeros(seq_len, hidden),
        i: Matrix::zeros(seq_len, hidden),
        g: Matrix::zeros(seq_len, hidden),
        o: Matrix::zeros(seq_len, hidden),
        tanh_c: Matrix::zeros(seq_len, hidden),
    };

    let mut pre = vec![0.0; hidden];
    for t in 0..seq_len {
        let h_prev = tape.h.row(t).to_vec();
        let c_prev = tape.c.row(t).to_vec();
        let x_t = tape.x.row(t).to_vec();

        gate_preact(w.w_f, &h_prev, &x_t, Some(w.b_f), &mut pre);
        for (k, &a) in pre.iter().enumerate() {
            tape.f.set(t, k, sigmoid(a));
        }
        gate_preact(w.w_i, &h_prev, &x_t, Some(w.b_i), &mut pre);
        for (k, &a) in pre.iter().enumerate() {
            tape.i.set(t, k, sigmoid(a));
        }
        gate_preact(w.w_c, &h_prev, &x_t, Some(w.b_c), &mut pre);
        for (k, &a) in pre.iter().enumerate() {
            tape.g.set(t, k, tanh(a));
        }
        gate_preact(w.w_o, &h_prev, &x_t, Some(w.b_o), &mut pre);
        for (k, &a) in pre.iter().enumerate() {
            tape.o.set(t, k, sigmoid(a));
        }

        for k in 0..hidden {
            let c_t = tape.f.get(t, k) * c_prev[k] + tape.i.get(t, k) * tape.g.get(t, k);
            let tc = tanh(c_t);
            tape.c.set(t + 1, k, c_t);
            tape.tanh_c.set(t, k, tc);
            tape.h.set(t + 1, k, tape.o.get(t, k) * tc);
        }
        if !tape.c.row(t + 1).iter().all(|v| v.is_finite())
            || !tape.h.row(t + 1).iter().all(|v| v.is_finite())
        {
            return Err(Error::non_finite(format!("lstm step {}", t + 1)));
        }
    }

    let h_final = tape.h.row(seq_len).to_vec();
    Ok((h_final, tape))
}

/// Backpropagates from a gradient on the final hidden state.
/// Returns the input-sequence gradient and the weight gradients.
pub fn lstm_sequence_backward(
    tape: LstmTape,
    w: &LstmWeights,
    d_h_final: &[f64],
) -> (Matrix, LstmGrads) {
    let (seq_len, dim) = tape.x.shape();
    let hidden = w.w_f.rows();
    assert_eq!(d_h_final.len(), hidden, "final-state grad length mismatch");

    let mut grads = LstmGrads {
        w_f: Matrix::zeros(hidden, hidden + dim),
        w_i: Matrix::zeros(hidden, hidden + dim),
        w_c: Matrix::zeros(hidden, hidden + dim),
        w_o: Matrix::zeros(hidden, hidden + dim),
        b_f: vec![0.0; hidden],
        b_i: vec![0.0; hidden],
        b_c: vec![0.0; hidden],
        b_o: vec![0.0; hidden],
    };
    let mut d_x = Matrix::zeros(seq_len, dim);

    let mut dh = d_h_final.to_vec();
    let mut dc = vec![0.0; hidden];
    let mut da_f = vec![0.0; hidden];
    let mut da_i = vec![0.0; hidden];
    let mut da_g = vec![0.0; hidden];
    let mut da_o = vec![0.0; hidden];

    for t in (0..seq_len).rev() {
        let h_prev = tape.h.row(t);
        let c_prev = tape.c.row(t);
        let x_t = tape.x.row(t);

        for k in 0..hidden {
            let f = tape.f.get(t, k);
            let i = tape.i.get(t, k);
            let g = tape.g.get(t, k);
            let o = tape.o.get(t, k);
            let tc = tape.tanh_c.get(t, k);

            da_o[k] = dh[k] * tc * o * (1.0 - o);
            dc[k] += dh[k] * o * (1.0 - tc * tc);
            da_f[k] = dc[k] * c_prev[k] * f * (1.0 - f);
            da_i[k] = dc[k] * g * i * (1.0 - i);
            da_g[k] = dc[k] * i * (1.0 - g * g);
        }

        add_outer_concat(&mut grads.w_f, &da_f, h_prev, x_t);
        add_outer_concat(&mut grads.w_i, &da_i, h_prev, x_t);
        add_outer_concat(&mut grads.w_c, &da_g, h_prev, x_t);
        add_outer_concat(&mut grads.w_o, &da_o, h_prev, x_t);
        add_scaled(&mut grads.b_f, &da_f, 1.0);
        add_scaled(&mut grads.b_i, &da_i, 1.0);
        add_scaled(&mut grads.b_c, &da_g, 1.0);
        add_scaled(&mut grads.b_o, &da_o, 1.0);

        let mut dh_prev = vec![0.0; hidden];
        add_concat_matvec_t(w.w_f, &da_f, &mut dh_prev, d_x.row_mut(t));
        add_concat_matvec_t(w.w_i, &da_i, &mut dh_prev, d_x.row_mut(t));
        add_concat_matvec_t(w.w_c, &da_g, &mut dh_prev, d_x.row_mut(t));
        add_concat_matvec_t(w.w_o, &da_o, &mut dh_prev, d_x.row_mut(t));

        for k in 0..hidden {
            dc[k] *= tape.f.get(t, k);
        }
        dh = dh_prev;
    }

    (d_x, grads)
}

/// Runs the GRU over the full sequence and returns the final hidden state.
pub fn gru_sequence_forward(x: Matrix, w: &GruWeights) -> Result<(Vec<f64>, GruTape)> {
    let (seq_len, dim) = x.shape();
    if seq_len == 0 {
        return Err(Error::invalid("recurrent layer on empty sequence"));
    }
    let hidden = w.w_z.rows();
    check_gate_shapes(
        hidden,
        hidden + dim,
        &[("w_z", w.w_z), ("w_r", w.w_r), ("w_h", w.w_h)],
    )?;

    let mut tape = GruTape {
        x,
        h: Matrix::zeros(seq_len + 1, hidden),
        z: Matrix::zeros(seq_len, hidden),
        r: Matrix::zeros(seq_len, hidden),
        g: Matrix::zeros(seq_len, hidden),
        rh: Matrix::zeros(seq_len, hidden),
    };

    let mut pre = vec![0.0; hidden];
    for t in 0..seq_len {
        let h_prev = tape.h.row(t).to_vec();
        let x_t = tape.x.row(t).to_vec();

        gate_preact(w.w_z, &h_prev, &x_t, None, &mut pre);
        for (k, &a) in pre.iter().enumerate() {
            tape.z.set(t, k, sigmoid(a));
        }
        gate_preact(w.w_r, &h_prev, &x_t, None, &mut pre);
        for (k, &a) in pre.iter().enumerate() {
            tape.r.set(t, k, sigmoid(a));
        }
        let rh: Vec<f64> = (0..hidden).map(|k| tape.r.get(t, k) * h_prev[k]).collect();
        tape.rh.row_mut(t).copy_from_slice(&rh);
        gate_preact(w.w_h, &rh, &x_t, None, &mut pre);
        for (k, &a) in pre.iter().enumerate() {
            tape.g.set(t, k, tanh(a));
        }

        for k in 0..hidden {
            let z = tape.z.get(t, k);
            tape.h.set(t + 1, k, (1.0 - z) * h_prev[k] + z * tape.g.get(t, k));
        }
        if !tape.h.row(t + 1).iter().all(|v| v.is_finite()) {
            return Err(Error::non_finite(format!("gru step {}", t + 1)));
        }
    }

    let h_final = tape.h.row(seq_len).to_vec();
    Ok((h_final, tape))
}

/// Backpropagates from a gradient on the final hidden state.
pub fn gru_sequence_backward(
    tape: GruTape,
    w: &GruWeights,
    d_h_final: &[f64],
) -> (Matrix, GruGrads) {
    let (seq_len, dim) = tape.x.shape();
    let hidden = w.w_z.rows();
    assert_eq!(d_h_final.len(), hidden, "final-state grad length mismatch");

    let mut grads = GruGrads {
        w_z: Matrix::zeros(hidden, hidden + dim),
        w_r: Matrix::zeros(hidden, hidden + dim),
        w_h: Matrix::zeros(hidden, hidden + dim),
    };
    let mut d_x = Matrix::zeros(seq_len, dim);

    let mut dh = d_h_final.to_vec();
    let mut da_z = vec![0.0; hidden];
    let mut da_g = vec![0.0; hidden];
    let mut da_r = vec![0.0; hidden];
    let mut d_rh = vec![0.0; hidden];

    for t in (0..seq_len).rev() {
        let h_prev = tape.h.row(t);
        let x_t = tape.x.row(t);

        let mut dh_prev = vec![0.0; hidden];
        for k in 0..hidden {
            let z = tape.z.get(t, k);
            let g = tape.g.get(t, k);
            da_z[k] = dh[k] * (g - h_prev[k]) * z * (1.0 - z);
            da_g[k] = dh[k] * z * (1.0 - g * g);
            dh_prev[k] = dh[k] * (1.0 - z);
        }

        add_outer_concat(&mut grads.w_z, &da_z, h_prev, x_t);
        add_outer_concat(&mut grads.w_h, &da_g, tape.rh.row(t), x_t);
        add_concat_matvec_t(w.w_z, &da_z, &mut dh_prev, d_x.row_mut(t));

        // Candidate path: gradient w.r.t. [r * h_prev, x_t].
        d_rh.fill(0.0);
        add_concat_matvec_t(w.w_h, &da_g, &mut d_rh, d_x.row_mut(t));
        for k in 0..hidden {
            let r = tape.r.get(t, k);
            dh_prev[k] += d_rh[k] * r;
            da_r[k] = d_rh[k] * h_prev[k] * r * (1.0 - r);
        }
        add_outer_concat(&mut grads.w_r, &da_r, h_prev, x_t);
        add_concat_matvec_t(w.w_r, &da_r, &mut dh_prev, d_x.row_mut(t));

        dh = dh_prev;
    }

    (d_x, grads)
}

/// Forward and time-reversed LSTM passes; final states concatenated
/// (forward half first).
pub fn bilstm_sequence_forward(
    x: Matrix,
    fwd: &LstmWeights,
    bwd: &LstmWeights,
) -> Result<(Vec<f64>, BiLstmTape)> {
    let x_rev = reverse_rows(&x);
    let (h_f, tape_f) = lstm_sequence_forward(x, fwd)?;
    let (h_b, tape_b) = lstm_sequence_forward(x_rev, bwd)?;
    let mut out = h_f;
    out.extend_from_slice(&h_b);
    Ok((
        out,
        BiLstmTape {
            fwd: tape_f,
            bwd: tape_b,
        },
    ))
}

/// Splits the output gradient at `H`, backpropagates both directions, and
/// recombines the input gradient in original time order.
pub fn bilstm_sequence_backward(
    tape: BiLstmTape,
    fwd: &LstmWeights,
    bwd: &LstmWeights,
    d_out: &[f64],
) -> (Matrix, LstmGrads, LstmGrads) {
    let hidden = fwd.w_f.rows();
    assert_eq!(d_out.len(), 2 * hidden, "bilstm grad length mismatch");
    let (d_fwd_state, d_bwd_state) = d_out.split_at(hidden);
    let (d_x_f, grads_f) = lstm_sequence_backward(tape.fwd, fwd, d_fwd_state);
    let (d_x_b_rev, grads_b) = lstm_sequence_backward(tape.bwd, bwd, d_bwd_state);
    let mut d_x = d_x_f;
    let d_x_b = reverse_rows(&d_x_b_rev);
    d_x.add_scaled_matrix(&d_x_b, 1.0);
    (d_x, grads_f, grads_b)
}

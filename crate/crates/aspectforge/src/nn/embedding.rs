//! Token-index to vector lookup.
//!
//! Row 0 of the table belongs to padding and row 1 to out-of-vocabulary
//! tokens; both are ordinary trainable rows.

use super::matrix::add_scaled;
use super::Matrix;
use crate::{Error, Result};

#[derive(Debug)]
pub struct EmbeddingTape {
    tokens: Vec<usize>,
}

/// Looks up one row per token, producing an `L x d` sequence matrix.
pub fn embedding_forward(tokens: &[usize], table: &Matrix) -> Result<(Matrix, EmbeddingTape)> {
    if tokens.is_empty() {
        return Err(Error::invalid("embedding lookup on empty token sequence"));
    }
    let mut out = Matrix::zeros(tokens.len(), table.cols());
    for (t, &tok) in tokens.iter().enumerate() {
        if tok >= table.rows() {
            return Err(Error::invalid(format!(
                "token index {tok} outside embedding table of {} rows",
                table.rows()
            )));
        }
        out.row_mut(t).copy_from_slice(table.row(tok));
    }
    let tape = EmbeddingTape {
        tokens: tokens.to_vec(),
    };
    Ok((out, tape))
}

/// Scatters `d_out` rows back onto the looked-up table rows. Repeated
/// tokens accumulate, including padding.
pub fn embedding_backward(tape: EmbeddingTape, d_out: &Matrix, d_table: &mut Matrix) {
    assert_eq!(d_out.rows(), tape.tokens.len(), "embedding tape mismatch");
    assert_eq!(d_out.cols(), d_table.cols(), "embedding grad width mismatch");
    for (t, &tok) in tape.tokens.iter().enumerate() {
        add_scaled(d_table.row_mut(tok), d_out.row(t), 1.0);
    }
}

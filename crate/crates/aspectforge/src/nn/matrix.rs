//! Dense row-major `f64` matrix.
//!
//! Deliberately small: just the operations the layers need. Shape errors in
//! these low-level routines are programming bugs, so they panic; public
//! layer entry points validate shapes and return `Err` instead.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> crate::Result<Self> {
        if data.len() != rows * cols {
            return Err(crate::Error::shape(format!(
                "matrix {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn fill(&mut self, v: f64) {
        self.data.fill(v);
    }

    /// `out = self * x` for a column vector `x`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "matvec dimension mismatch");
        let mut out = vec![0.0; self.rows];
        self.matvec_into(x, &mut out);
        out
    }

    pub fn matvec_into(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.cols, "matvec dimension mismatch");
        assert_eq!(out.len(), self.rows, "matvec output mismatch");
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(self.row(i), x);
        }
    }

    /// `out += self^T * y`; iterates rows so access stays sequential.
    pub fn add_matvec_transpose(&self, y: &[f64], out: &mut [f64]) {
        assert_eq!(y.len(), self.rows, "transposed matvec dimension mismatch");
        assert_eq!(out.len(), self.cols, "transposed matvec output mismatch");
        for (i, &yi) in y.iter().enumerate() {
            if yi != 0.0 {
                add_scaled(out, self.row(i), yi);
            }
        }
    }

    /// Rank-one update `self += u * v^T`.
    pub fn add_outer(&mut self, u: &[f64], v: &[f64]) {
        assert_eq!(u.len(), self.rows, "outer product row mismatch");
        assert_eq!(v.len(), self.cols, "outer product column mismatch");
        for (i, &ui) in u.iter().enumerate() {
            if ui != 0.0 {
                add_scaled(self.row_mut(i), v, ui);
            }
        }
    }

    pub fn add_scaled_matrix(&mut self, other: &Matrix, scale: f64) {
        assert_eq!(self.shape(), other.shape(), "matrix addition shape mismatch");
        add_scaled(&mut self.data, &other.data, scale);
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "dot product length mismatch");
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `a += s * b`.
pub fn add_scaled(a: &mut [f64], b: &[f64], s: f64) {
    assert_eq!(a.len(), b.len(), "add_scaled length mismatch");
    for (x, y) in a.iter_mut().zip(b) {
        *x += s * y;
    }
}

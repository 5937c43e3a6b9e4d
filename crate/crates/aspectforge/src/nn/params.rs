//! Named parameter storage and weight initializers.
//!
//! A [`ParameterSet`] keeps every trainable tensor of a network together
//! with its gradient accumulator, in a stable insertion order. That order
//! defines both the optimizer's slot layout and the checkpoint layout, so
//! it must not depend on hashing.

use indexmap::IndexMap;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::matrix::{dot, Matrix};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct Param {
    pub value: Matrix,
    pub grad: Matrix,
}

#[derive(Debug, Clone, Default)]
pub struct ParameterSet {
    entries: IndexMap<String, Param>,
}

impl ParameterSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a tensor under `name`; the gradient starts at zero.
    pub fn register(&mut self, name: &str, value: Matrix) -> Result<()> {
        if self.entries.contains_key(name) {
            return Err(Error::invalid(format!("parameter {name} registered twice")));
        }
        let grad = Matrix::zeros(value.rows(), value.cols());
        self.entries.insert(name.to_string(), Param { value, grad });
        Ok(())
    }

    pub fn value(&self, name: &str) -> &Matrix {
        &self.entry(name).value
    }

    pub fn value_mut(&mut self, name: &str) -> &mut Matrix {
        &mut self.entry_mut(name).value
    }

    pub fn grad(&self, name: &str) -> &Matrix {
        &self.entry(name).grad
    }

    /// Accumulates `delta` into the gradient of `name`.
    pub fn add_to_grad(&mut self, name: &str, delta: &Matrix) {
        self.entry_mut(name).grad.add_scaled_matrix(delta, 1.0);
    }

    pub fn zero_grads(&mut self) {
        for p in self.entries.values_mut() {
            p.grad.fill(0.0);
        }
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.keys().cloned().collect()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Param)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    /// Total number of scalar parameters.
    pub fn total_len(&self) -> usize {
        self.entries.values().map(|p| p.value.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.entries.values().all(|p| p.value.all_finite())
    }

    fn entry(&self, name: &str) -> &Param {
        self.entries
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    fn entry_mut(&mut self, name: &str) -> &mut Param {
        self.entries
            .get_mut(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }
}

/// Matrix with entries drawn uniformly from `[lo, hi)`.
pub fn uniform_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Matrix {
    let mut m = Matrix::zeros(rows, cols);
    for v in m.data_mut() {
        *v = rng.random_range(lo..hi);
    }
    m
}

/// Glorot (uniform) initialization with bound `sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_matrix(
    rng: &mut ChaCha8Rng,
    rows: usize,
    cols: usize,
    fan_in: usize,
    fan_out: usize,
) -> Matrix {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    uniform_matrix(rng, rows, cols, -bound, bound)
}

/// Random `n x n` orthogonal matrix: Gaussian rows made orthonormal by
/// modified Gram-Schmidt. Rank deficiency has probability zero, but a
/// degenerate row is resampled anyway rather than dividing by ~0.
pub fn orthogonal_matrix(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    let mut m = Matrix::zeros(n, n);
    let mut i = 0;
    while i < n {
        for v in m.row_mut(i) {
            *v = StandardNormal.sample(rng);
        }
        for j in 0..i {
            let proj = dot(m.row(i), m.row(j));
            let row_j = m.row(j).to_vec();
            for (v, w) in m.row_mut(i).iter_mut().zip(&row_j) {
                *v -= proj * w;
            }
        }
        let norm = dot(m.row(i), m.row(i)).sqrt();
        if norm < 1e-12 {
            continue;
        }
        for v in m.row_mut(i) {
            *v /= norm;
        }
        i += 1;
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn duplicate_registration_is_rejected() {
        let mut p = ParameterSet::new();
        p.register("w", Matrix::zeros(2, 2)).unwrap();
        assert!(p.register("w", Matrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn registration_order_is_preserved() {
        let mut p = ParameterSet::new();
        for name in ["zeta", "alpha", "mid"] {
            p.register(name, Matrix::zeros(1, 1)).unwrap();
        }
        assert_eq!(p.names(), vec!["zeta", "alpha", "mid"]);
    }

    #[test]
    fn grad_accumulates_and_resets() {
        let mut p = ParameterSet::new();
        p.register("w", Matrix::zeros(1, 2)).unwrap();
        let delta = Matrix::from_vec(1, 2, vec![1.0, -2.0]).unwrap();
        p.add_to_grad("w", &delta);
        p.add_to_grad("w", &delta);
        assert_eq!(p.grad("w").data(), &[2.0, -4.0]);
        p.zero_grads();
        assert_eq!(p.grad("w").data(), &[0.0, 0.0]);
    }

    #[test]
    fn glorot_respects_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = glorot_matrix(&mut rng, 30, 40, 40, 30);
        let bound = (6.0f64 / 70.0).sqrt();
        assert!(m.data().iter().all(|v| v.abs() < bound));
        // Not degenerate: values actually spread out.
        assert!(m.data().iter().any(|v| v.abs() > bound / 2.0));
    }

    #[test]
    fn orthogonal_rows_are_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 24;
        let q = orthogonal_matrix(&mut rng, n);
        for i in 0..n {
            for j in 0..n {
                let d = dot(q.row(i), q.row(j));
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!(
                    (d - expect).abs() < 1e-10,
                    "row {i} . row {j} = {d}, expected {expect}"
                );
            }
        }
    }

    #[test]
    fn initializers_are_seed_deterministic() {
        let a = uniform_matrix(&mut ChaCha8Rng::seed_from_u64(3), 4, 4, -0.05, 0.05);
        let b = uniform_matrix(&mut ChaCha8Rng::seed_from_u64(3), 4, 4, -0.05, 0.05);
        assert_eq!(a, b);
        assert!(a.data().iter().all(|v| v.abs() < 0.05));
    }
}

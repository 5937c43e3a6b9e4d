//! Neural-network primitives: matrices, parameter storage, layer
//! forward/backward passes, and finite-difference gradient checking.
//!
//! Layers are free functions over [`Matrix`] values. Each forward pass
//! returns its output together with a tape holding exactly what the
//! matching backward pass needs; backward passes consume the tape by value,
//! so a tape cannot be replayed. All arithmetic is `f64`.

pub mod batchnorm;
pub mod conv;
pub mod dense;
pub mod dropout;
pub mod embedding;
pub mod gradcheck;
pub mod matrix;
pub mod params;
pub mod recurrent;

pub use matrix::Matrix;
pub use params::ParameterSet;

/// Whether a forward pass is part of training (dropout active, batch
/// statistics used and updated) or inference (both disabled).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Largest `f64` strictly below 1.0.
pub(crate) const ONE_BELOW_ONE: f64 = 1.0 - f64::EPSILON / 2.0;

/// Numerically stable logistic function, clamped so the result stays
/// strictly inside (0, 1) even where `exp` underflows.
pub fn sigmoid(x: f64) -> f64 {
    let s = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    s.clamp(f64::MIN_POSITIVE, ONE_BELOW_ONE)
}

/// `tanh` clamped strictly inside (-1, 1).
pub fn tanh(x: f64) -> f64 {
    x.tanh().clamp(-ONE_BELOW_ONE, ONE_BELOW_ONE)
}

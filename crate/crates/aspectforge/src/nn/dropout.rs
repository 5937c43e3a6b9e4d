//! Inverted dropout on a feature vector.
//!
//! During training each element survives with probability `1 - rate` and is
//! scaled by `1 / (1 - rate)`, keeping the expectation unchanged; inference
//! is the identity. The backward pass reuses the exact mask.

use super::Mode;
use crate::{Error, Result};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug)]
pub struct DropoutTape {
    /// Per-element multiplier applied in the forward pass.
    scale: Vec<f64>,
}

pub fn dropout_forward(
    v: &[f64],
    rate: f64,
    mode: Mode,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<f64>, DropoutTape)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::invalid(format!("dropout rate {rate} outside [0, 1)")));
    }
    let scale: Vec<f64> = match mode {
        Mode::Infer => vec![1.0; v.len()],
        Mode::Train => {
            let keep = 1.0 - rate;
            v.iter()
                .map(|_| {
                    if rng.random::<f64>() < rate {
                        0.0
                    } else {
                        1.0 / keep
                    }
                })
                .collect()
        }
    };
    let out = v.iter().zip(&scale).map(|(x, s)| x * s).collect();
    Ok((out, DropoutTape { scale }))
}

pub fn dropout_backward(tape: &DropoutTape, d_out: &[f64]) -> Vec<f64> {
    assert_eq!(d_out.len(), tape.scale.len(), "dropout tape length mismatch");
    d_out.iter().zip(&tape.scale).map(|(g, s)| g * s).collect()
}

//! Batch normalization over a batch of feature vectors.
//!
//! Training normalizes each feature by the batch mean and biased batch
//! variance, then applies the learned affine (gamma, beta) and updates
//! exponential running statistics. Inference normalizes with the running
//! statistics and never mutates them.

use super::Matrix;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BatchNormState {
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNormState {
    pub fn new(features: usize) -> Self {
        BatchNormState {
            running_mean: vec![0.0; features],
            running_var: vec![1.0; features],
            momentum: 0.9,
            eps: 1e-5,
        }
    }
}

#[derive(Debug)]
pub struct BatchNormTape {
    x_hat: Matrix,
    inv_std: Vec<f64>,
}

/// Training-mode pass over `x` (one row per example). Requires at least two
/// rows, since a single example has no batch variance to speak of.
pub fn batchnorm_train_forward(
    x: &Matrix,
    gamma: &[f64],
    beta: &[f64],
    state: &mut BatchNormState,
) -> Result<(Matrix, BatchNormTape)> {
    let (batch, features) = x.shape();
    check_affine(features, gamma, beta)?;
    if batch < 2 {
        return Err(Error::invalid(format!(
            "batch normalization needs at least 2 training examples, got {batch}"
        )));
    }

    let mut mean = vec![0.0; features];
    for b in 0..batch {
        for (m, &v) in mean.iter_mut().zip(x.row(b)) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= batch as f64;
    }

    let mut var = vec![0.0; features];
    for b in 0..batch {
        for (j, &v) in x.row(b).iter().enumerate() {
            let d = v - mean[j];
            var[j] += d * d;
        }
    }
    for v in &mut var {
        *v /= batch as f64;
    }

    let inv_std: Vec<f64> = var.iter().map(|&v| 1.0 / (v + state.eps).sqrt()).collect();

    let mut x_hat = Matrix::zeros(batch, features);
    let mut out = Matrix::zeros(batch, features);
    for b in 0..batch {
        for j in 0..features {
            let xh = (x.get(b, j) - mean[j]) * inv_std[j];
            x_hat.set(b, j, xh);
            out.set(b, j, gamma[j] * xh + beta[j]);
        }
    }

    let m = state.momentum;
    for j in 0..features {
        state.running_mean[j] = m * state.running_mean[j] + (1.0 - m) * mean[j];
        state.running_var[j] = m * state.running_var[j] + (1.0 - m) * var[j];
    }

    Ok((out, BatchNormTape { x_hat, inv_std }))
}

/// Inference-mode pass: a per-feature affine map using running statistics.
pub fn batchnorm_infer_forward(
    x: &Matrix,
    gamma: &[f64],
    beta: &[f64],
    state: &BatchNormState,
) -> Result<Matrix> {
    let (batch, features) = x.shape();
    check_affine(features, gamma, beta)?;
    if state.running_mean.len() != features {
        return Err(Error::shape("running statistics width mismatch"));
    }
    let mut out = Matrix::zeros(batch, features);
    for b in 0..batch {
        for j in 0..features {
            let inv = 1.0 / (state.running_var[j] + state.eps).sqrt();
            out.set(b, j, gamma[j] * (x.get(b, j) - state.running_mean[j]) * inv + beta[j]);
        }
    }
    Ok(out)
}

/// Returns (d_x, d_gamma, d_beta) for a training-mode pass.
pub fn batchnorm_backward(
    tape: &BatchNormTape,
    gamma: &[f64],
    d_out: &Matrix,
) -> (Matrix, Vec<f64>, Vec<f64>) {
    let (batch, features) = tape.x_hat.shape();
    assert_eq!(d_out.shape(), (batch, features), "batchnorm grad shape mismatch");

    let mut d_gamma = vec![0.0; features];
    let mut d_beta = vec![0.0; features];
    let mut sum_dxhat = vec![0.0; features];
    let mut sum_dxhat_xhat = vec![0.0; features];
    for b in 0..batch {
        for j in 0..features {
            let g = d_out.get(b, j);
            let xh = tape.x_hat.get(b, j);
            d_beta[j] += g;
            d_gamma[j] += g * xh;
            let dxh = g * gamma[j];
            sum_dxhat[j] += dxh;
            sum_dxhat_xhat[j] += dxh * xh;
        }
    }

    let n = batch as f64;
    let mut d_x = Matrix::zeros(batch, features);
    for b in 0..batch {
        for j in 0..features {
            let dxh = d_out.get(b, j) * gamma[j];
            let xh = tape.x_hat.get(b, j);
            let v = tape.inv_std[j] / n * (n * dxh - sum_dxhat[j] - xh * sum_dxhat_xhat[j]);
            d_x.set(b, j, v);
        }
    }
    (d_x, d_gamma, d_beta)
}

fn check_affine(features: usize, gamma: &[f64], beta: &[f64]) -> Result<()> {
    if gamma.len() != features || beta.len() != features {
        return Err(Error::shape(format!(
            "batchnorm affine widths ({}, {}) != feature width {features}",
            gamma.len(),
            beta.len()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::uniform_matrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn normalizes_each_feature_of_the_batch() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = uniform_matrix(&mut rng, 16, 3, -5.0, 5.0);
        let gamma = vec![1.0; 3];
        let beta = vec![0.0; 3];
        let mut state = BatchNormState::new(3);
        let (out, _) = batchnorm_train_forward(&x, &gamma, &beta, &mut state).unwrap();

        for j in 0..3 {
            let mean: f64 = (0..16).map(|b| out.get(b, j)).sum::<f64>() / 16.0;
            let var: f64 = (0..16).map(|b| (out.get(b, j) - mean).powi(2)).sum::<f64>() / 16.0;
            assert!(mean.abs() < 1e-12, "feature {j} mean {mean}");
            // Variance is v/(v+eps), just below 1.
            assert!((var - 1.0).abs() < 1e-3, "feature {j} var {var}");
        }
    }

    #[test]
    fn constant_feature_maps_to_beta() {
        let x = Matrix::from_vec(3, 1, vec![4.2, 4.2, 4.2]).unwrap();
        let mut state = BatchNormState::new(1);
        let (out, _) = batchnorm_train_forward(&x, &[2.0], &[0.7], &mut state).unwrap();
        for b in 0..3 {
            assert_eq!(out.get(b, 0), 0.7);
        }
    }

    #[test]
    fn single_example_training_batch_is_rejected() {
        let x = Matrix::zeros(1, 4);
        let mut state = BatchNormState::new(4);
        let err = batchnorm_train_forward(&x, &[1.0; 4], &[0.0; 4], &mut state).unwrap_err();
        assert!(err.to_string().contains("at least 2"));
    }

    #[test]
    fn running_statistics_blend_with_momentum() {
        let x = Matrix::from_vec(2, 1, vec![1.0, 3.0]).unwrap();
        let mut state = BatchNormState::new(1);
        batchnorm_train_forward(&x, &[1.0], &[0.0], &mut state).unwrap();
        // Batch mean 2, biased variance 1; blended into (0, 1) with momentum 0.9.
        assert!((state.running_mean[0] - 0.2).abs() < 1e-15);
        assert!((state.running_var[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn inference_is_per_example_affine() {
        let mut state = BatchNormState::new(2);
        state.running_mean = vec![1.0, -1.0];
        state.running_var = vec![4.0, 0.25];
        let x = Matrix::from_vec(2, 2, vec![3.0, 0.0, 1.0, -1.0]).unwrap();
        let out = batchnorm_infer_forward(&x, &[1.0, 2.0], &[0.5, 0.0], &state).unwrap();
        let inv0 = 1.0 / (4.0f64 + 1e-5).sqrt();
        let inv1 = 1.0 / (0.25f64 + 1e-5).sqrt();
        assert!((out.get(0, 0) - (2.0 * inv0 + 0.5)).abs() < 1e-12);
        assert!((out.get(0, 1) - 2.0 * inv1).abs() < 1e-12);
        assert!((out.get(1, 0) - 0.5).abs() < 1e-12);
        assert!((out.get(1, 1) - 0.0).abs() < 1e-12);
        // State untouched.
        assert_eq!(state.running_mean, vec![1.0, -1.0]);
    }
}

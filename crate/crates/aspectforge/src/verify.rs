//! Gradient verification suites.
//!
//! Two levels: every layer primitive checked in isolation against central
//! finite differences (including its input gradients, by registering the
//! input as a checkable parameter), and every architecture checked end to
//! end through the full forward/backward/loss path. Stochastic pieces are
//! frozen by reseeding their generator inside the loss closure.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::corpus::EncodedExample;
use crate::models::{
    backward_batch, build_network, forward_batch, ArchitectureKind, ModelConfig,
    ALL_ARCHITECTURES,
};
use crate::nn::batchnorm::{batchnorm_backward, batchnorm_train_forward, BatchNormState};
use crate::nn::conv::{conv_maxpool_backward, conv_maxpool_forward};
use crate::nn::dense::{dense_backward, dense_forward, Activation};
use crate::nn::dropout::{dropout_backward, dropout_forward};
use crate::nn::embedding::{embedding_backward, embedding_forward};
use crate::nn::gradcheck::{gradient_check, GradCheckReport};
use crate::nn::matrix::dot;
use crate::nn::recurrent::{
    bilstm_sequence_backward, bilstm_sequence_forward, gru_sequence_backward,
    gru_sequence_forward, lstm_sequence_backward, lstm_sequence_forward, GruWeights, LstmWeights,
};
use crate::nn::{Matrix, Mode, ParameterSet};
use crate::training::bce_loss;
use crate::{Error, Result};

/// Step size for the finite differences.
pub const DEFAULT_CHECK_EPSILON: f64 = 1e-5;
/// Largest acceptable relative error between analytic and numeric values.
pub const CHECK_TOLERANCE: f64 = 1e-4;

/// Worst relative error observed for one checked unit.
#[derive(Debug, Clone, Serialize)]
pub struct CheckEntry {
    pub name: String,
    pub max_rel_error: f64,
    pub trials: usize,
    pub coords_checked: usize,
}

impl CheckEntry {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= CHECK_TOLERANCE
    }
}

const VOCAB: usize = 20;
const DIM: usize = 4;
const SEQ: usize = 6;
const HIDDEN: usize = 5;
const FILTERS: usize = 3;
const LABELS: usize = 4;

fn rand_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-scale..scale))
        .collect();
    Matrix::from_vec(rows, cols, data).expect("size matches by construction")
}

fn check_embedding(rng: &mut ChaCha8Rng, eps: f64) -> Result<GradCheckReport> {
    let tokens: Vec<usize> = (0..SEQ).map(|_| rng.random_range(0..VOCAB)).collect();
    let c = rand_matrix(rng, SEQ, DIM, 1.0);
    let mut params = ParameterSet::new();
    params.register("table", rand_matrix(rng, VOCAB, DIM, 0.5))?;
    gradient_check(&mut params, eps, |p, accumulate| {
        let (out, tape) = embedding_forward(&tokens, p.value("table"))?;
        let loss = dot(out.data(), c.data());
        if accumulate {
            let mut d_table = Matrix::zeros(VOCAB, DIM);
            embedding_backward(tape, &c, &mut d_table);
            p.add_to_grad("table", &d_table);
        }
        Ok(loss)
    })
}

fn check_dense(rng: &mut ChaCha8Rng, eps: f64) -> Result<GradCheckReport> {
    let c: Vec<f64> = (0..FILTERS).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut params = ParameterSet::new();
    params.register("x", rand_matrix(rng, 1, DIM, 1.0))?;
    params.register("w", rand_matrix(rng, FILTERS, DIM, 0.8))?;
    params.register("b", rand_matrix(rng, 1, FILTERS, 0.5))?;
    gradient_check(&mut params, eps, |p, accumulate| {
        let (out, tape) = dense_forward(
            p.value("x").row(0),
            p.value("w"),
            p.value("b").row(0),
            Activation::Sigmoid,
        )?;
        let loss = dot(&out, &c);
        if accumulate {
            let (d_x, d_w, d_b) = dense_backward(&tape, p.value("w"), &c);
            p.add_to_grad("x", &Matrix::from_vec(1, DIM, d_x)?);
            p.add_to_grad("w", &d_w);
            p.add_to_grad("b", &Matrix::from_vec(1, FILTERS, d_b)?);
        }
        Ok(loss)
    })
}

fn check_conv(rng: &mut ChaCha8Rng, eps: f64) -> Result<GradCheckReport> {
    let kernel_size = 3;
    let c: Vec<f64> = (0..FILTERS).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut params = ParameterSet::new();
    params.register("x", rand_matrix(rng, SEQ, DIM, 1.0))?;
    params.register("kernels", rand_matrix(rng, FILTERS, kernel_size * DIM, 0.8))?;
    params.register("bias", rand_matrix(rng, 1, FILTERS, 0.5))?;
    gradient_check(&mut params, eps, |p, accumulate| {
        let (pooled, tape) = conv_maxpool_forward(
            p.value("x").clone(),
            p.value("kernels"),
            p.value("bias").row(0),
            kernel_size,
        )?;
        let loss = dot(&pooled, &c);
        if accumulate {
            let (d_x, d_kernels, d_bias) = conv_maxpool_backward(tape, p.value("kernels"), &c);
            p.add_to_grad("x", &d_x);
            p.add_to_grad("kernels", &d_kernels);
            p.add_to_grad("bias", &Matrix::from_vec(1, FILTERS, d_bias)?);
        }
        Ok(loss)
    })
}

fn check_lstm(rng: &mut ChaCha8Rng, eps: f64) -> Result<GradCheckReport> {
    let width = HIDDEN + DIM;
    let c: Vec<f64> = (0..HIDDEN).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut params = ParameterSet::new();
    params.register("x", rand_matrix(rng, SEQ, DIM, 1.0))?;
    for gate in ["f", "i", "c", "o"] {
        params.register(&format!("w_{gate}"), rand_matrix(rng, HIDDEN, width, 0.6))?;
        params.register(&format!("b_{gate}"), rand_matrix(rng, 1, HIDDEN, 0.4))?;
    }
    gradient_check(&mut params, eps, |p, accumulate| {
        let (loss, grads) = {
            let w = LstmWeights {
                w_f: p.value("w_f"),
                w_i: p.value("w_i"),
                w_c: p.value("w_c"),
                w_o: p.value("w_o"),
                b_f: p.value("b_f").row(0),
                b_i: p.value("b_i").row(0),
                b_c: p.value("b_c").row(0),
                b_o: p.value("b_o").row(0),
            };
            let (h, tape) = lstm_sequence_forward(p.value("x").clone(), &w)?;
            let loss = dot(&h, &c);
            let grads = accumulate.then(|| lstm_sequence_backward(tape, &w, &c));
            (loss, grads)
        };
        if let Some((d_x, g)) = grads {
            p.add_to_grad("x", &d_x);
            p.add_to_grad("w_f", &g.w_f);
            p.add_to_grad("w_i", &g.w_i);
            p.add_to_grad("w_c", &g.w_c);
            p.add_to_grad("w_o", &g.w_o);
            p.add_to_grad("b_f", &Matrix::from_vec(1, HIDDEN, g.b_f)?);
            p.add_to_grad("b_i", &Matrix::from_vec(1, HIDDEN, g.b_i)?);
            p.add_to_grad("b_c", &Matrix::from_vec(1, HIDDEN, g.b_c)?);
            p.add_to_grad("b_o", &Matrix::from_vec(1, HIDDEN, g.b_o)?);
        }
        Ok(loss)
    })
}

fn check_gru(rng: &mut ChaCha8Rng, eps: f64) -> Result<GradCheckReport> {
    let width = HIDDEN + DIM;
    let c: Vec<f64> = (0..HIDDEN).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut params = ParameterSet::new();
    params.register("x", rand_matrix(rng, SEQ, DIM, 1.0))?;
    for gate in ["z", "r", "h"] {
        params.register(&format!("w_{gate}"), rand_matrix(rng, HIDDEN, width, 0.6))?;
    }
    gradient_check(&mut params, eps, |p, accumulate| {
        let (loss, grads) = {
            let w = GruWeights {
                w_z: p.value("w_z"),
                w_r: p.value("w_r"),
                w_h: p.value("w_h"),
            };
            let (h, tape) = gru_sequence_forward(p.value("x").clone(), &w)?;
            let loss = dot(&h, &c);
            let grads = accumulate.then(|| gru_sequence_backward(tape, &w, &c));
            (loss, grads)
        };
        if let Some((d_x, g)) = grads {
            p.add_to_grad("x", &d_x);
            p.add_to_grad("w_z", &g.w_z);
            p.add_to_grad("w_r", &g.w_r);
            p.add_to_grad("w_h", &g.w_h);
        }
        Ok(loss)
    })
}

fn check_bilstm(rng: &mut ChaCha8Rng, eps: f64) -> Result<GradCheckReport> {
    let width = HIDDEN + DIM;
    let c: Vec<f64> = (0..2 * HIDDEN).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut params = ParameterSet::new();
    params.register("x", rand_matrix(rng, SEQ, DIM, 1.0))?;
    for dir in ["fwd", "bwd"] {
        for gate in ["f", "i", "c", "o"] {
            params.register(&format!("{dir}.w_{gate}"), rand_matrix(rng, HIDDEN, width, 0.6))?;
            params.register(&format!("{dir}.b_{gate}"), rand_matrix(rng, 1, HIDDEN, 0.4))?;
        }
    }
    gradient_check(&mut params, eps, |p, accumulate| {
        let weights = |dir: &str| LstmWeights {
            w_f: p.value(&format!("{dir}.w_f")),
            w_i: p.value(&format!("{dir}.w_i")),
            w_c: p.value(&format!("{dir}.w_c")),
            w_o: p.value(&format!("{dir}.w_o")),
            b_f: p.value(&format!("{dir}.b_f")).row(0),
            b_i: p.value(&format!("{dir}.b_i")).row(0),
            b_c: p.value(&format!("{dir}.b_c")).row(0),
            b_o: p.value(&format!("{dir}.b_o")).row(0),
        };
        let (loss, grads) = {
            let fwd = weights("fwd");
            let bwd = weights("bwd");
            let (h, tape) = bilstm_sequence_forward(p.value("x").clone(), &fwd, &bwd)?;
            let loss = dot(&h, &c);
            let grads = accumulate.then(|| bilstm_sequence_backward(tape, &fwd, &bwd, &c));
            (loss, grads)
        };
        if let Some((d_x, g_f, g_b)) = grads {
            p.add_to_grad("x", &d_x);
            for (dir, g) in [("fwd", g_f), ("bwd", g_b)] {
                p.add_to_grad(&format!("{dir}.w_f"), &g.w_f);
                p.add_to_grad(&format!("{dir}.w_i"), &g.w_i);
                p.add_to_grad(&format!("{dir}.w_c"), &g.w_c);
                p.add_to_grad(&format!("{dir}.w_o"), &g.w_o);
                p.add_to_grad(&format!("{dir}.b_f"), &Matrix::from_vec(1, HIDDEN, g.b_f)?);
                p.add_to_grad(&format!("{dir}.b_i"), &Matrix::from_vec(1, HIDDEN, g.b_i)?);
                p.add_to_grad(&format!("{dir}.b_c"), &Matrix::from_vec(1, HIDDEN, g.b_c)?);
                p.add_to_grad(&format!("{dir}.b_o"), &Matrix::from_vec(1, HIDDEN, g.b_o)?);
            }
        }
        Ok(loss)
    })
}

fn check_batchnorm(rng: &mut ChaCha8Rng, eps: f64) -> Result<GradCheckReport> {
    let batch = 4;
    let c = rand_matrix(rng, batch, FILTERS, 1.0);
    // Stagger the rows so each column keeps a healthy batch variance; a
    // near-constant column would put the finite difference on a cliff.
    let mut x = rand_matrix(rng, batch, FILTERS, 1.0);
    for b in 0..batch {
        for v in x.row_mut(b) {
            *v += b as f64;
        }
    }
    let mut gamma = rand_matrix(rng, 1, FILTERS, 0.3);
    for v in gamma.data_mut() {
        *v += 1.0;
    }
    let mut params = ParameterSet::new();
    params.register("x", x)?;
    params.register("gamma", gamma)?;
    params.register("beta", rand_matrix(rng, 1, FILTERS, 0.3))?;
    gradient_check(&mut params, eps, |p, accumulate| {
        let mut state = BatchNormState::new(FILTERS);
        let (loss, grads) = {
            let (out, tape) = batchnorm_train_forward(
                p.value("x"),
                p.value("gamma").row(0),
                p.value("beta").row(0),
                &mut state,
            )?;
            let loss = dot(out.data(), c.data());
            let grads = accumulate.then(|| batchnorm_backward(&tape, p.value("gamma").row(0), &c));
            (loss, grads)
        };
        if let Some((d_x, d_gamma, d_beta)) = grads {
            p.add_to_grad("x", &d_x);
            p.add_to_grad("gamma", &Matrix::from_vec(1, FILTERS, d_gamma)?);
            p.add_to_grad("beta", &Matrix::from_vec(1, FILTERS, d_beta)?);
        }
        Ok(loss)
    })
}

fn check_dropout(rng: &mut ChaCha8Rng, eps: f64) -> Result<GradCheckReport> {
    let len = 8;
    let mask_seed: u64 = rng.random();
    let c: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut params = ParameterSet::new();
    params.register("x", rand_matrix(rng, 1, len, 1.0))?;
    gradient_check(&mut params, eps, |p, accumulate| {
        let mut mask_rng = ChaCha8Rng::seed_from_u64(mask_seed);
        let (out, tape) = dropout_forward(p.value("x").row(0), 0.4, Mode::Train, &mut mask_rng)?;
        let loss = dot(&out, &c);
        if accumulate {
            let d_x = dropout_backward(&tape, &c);
            p.add_to_grad("x", &Matrix::from_vec(1, len, d_x)?);
        }
        Ok(loss)
    })
}

/// Configuration used by the end-to-end checks: small enough that central
/// differences over every coordinate stay fast.
pub fn tiny_check_config() -> ModelConfig {
    ModelConfig {
        vocab_size: VOCAB,
        n_labels: LABELS,
        embedding_dim: DIM,
        maxlen: SEQ,
        hidden_units: HIDDEN,
        conv_filters: FILTERS,
        kernel_size: 3,
        dropout_rate: 0.25,
        batchnorm: true,
    }
}

/// Full forward/backward check of one architecture: random parameters,
/// random batch, cross-entropy loss against random 0/1 targets.
fn check_architecture(
    kind: ArchitectureKind,
    trial_seed: u64,
    eps: f64,
) -> Result<GradCheckReport> {
    let config = tiny_check_config();
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
    let mut net = build_network(kind, &config, rng.random())?;

    let batch: Vec<EncodedExample> = (0..3)
        .map(|_| EncodedExample {
            tokens: (0..config.maxlen)
                .map(|_| rng.random_range(0..config.vocab_size))
                .collect(),
            target: (0..config.n_labels)
                .map(|_| f64::from(rng.random_bool(0.5)))
                .collect(),
        })
        .collect();
    let mut targets = Matrix::zeros(batch.len(), config.n_labels);
    for (b, ex) in batch.iter().enumerate() {
        targets.row_mut(b).copy_from_slice(&ex.target);
    }
    let mask_seed: u64 = rng.random();

    let mut params = std::mem::replace(&mut net.params, ParameterSet::new());
    let report = gradient_check(&mut params, eps, |p, accumulate| {
        std::mem::swap(&mut net.params, p);
        let outcome = (|| {
            let mut mask_rng = ChaCha8Rng::seed_from_u64(mask_seed);
            let (probs, tape) = forward_batch(&mut net, &batch, Mode::Train, &mut mask_rng)?;
            let (loss, d_probs) = bce_loss(&targets, &probs)?;
            if accumulate {
                backward_batch(&mut net, tape, &d_probs)?;
            }
            Ok(loss)
        })();
        std::mem::swap(&mut net.params, p);
        outcome
    });
    net.params = params;
    report
}

fn run_trials(
    name: &str,
    trials: usize,
    seed: u64,
    mut one_trial: impl FnMut(u64) -> Result<GradCheckReport>,
) -> Result<CheckEntry> {
    if trials == 0 {
        return Err(Error::invalid("gradient suite needs at least one trial"));
    }
    let mut max_rel_error = 0.0_f64;
    let mut coords_checked = 0;
    for trial in 0..trials {
        let report = one_trial(seed.wrapping_add(trial as u64))?;
        max_rel_error = max_rel_error.max(report.max_rel_error);
        coords_checked += report.coords_checked;
    }
    Ok(CheckEntry {
        name: name.to_string(),
        max_rel_error,
        trials,
        coords_checked,
    })
}

/// Checks each layer primitive in isolation.
pub fn layer_gradient_checks(epsilon: f64, trials: usize, seed: u64) -> Result<Vec<CheckEntry>> {
    type LayerCheck = fn(&mut ChaCha8Rng, f64) -> Result<GradCheckReport>;
    let cases: [(&str, LayerCheck); 8] = [
        ("layer/embedding", check_embedding),
        ("layer/conv_maxpool", check_conv),
        ("layer/lstm", check_lstm),
        ("layer/gru", check_gru),
        ("layer/bilstm", check_bilstm),
        ("layer/dense_sigmoid", check_dense),
        ("layer/batchnorm", check_batchnorm),
        ("layer/dropout", check_dropout),
    ];
    cases
        .iter()
        .enumerate()
        .map(|(i, (name, check))| {
            run_trials(name, trials, seed.wrapping_add(1000 * i as u64), |trial_seed| {
                let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
                check(&mut rng, epsilon)
            })
        })
        .collect()
}

/// Checks each architecture end to end at the tiny reference shapes.
pub fn architecture_gradient_checks(
    epsilon: f64,
    trials: usize,
    seed: u64,
) -> Result<Vec<CheckEntry>> {
    ALL_ARCHITECTURES
        .iter()
        .enumerate()
        .map(|(i, &kind)| {
            let name = format!("model/{kind}");
            run_trials(&name, trials, seed.wrapping_add(9000 + 1000 * i as u64), |trial_seed| {
                check_architecture(kind, trial_seed, epsilon)
            })
        })
        .collect()
}

/// Layer checks followed by end-to-end checks.
pub fn full_gradient_suite(epsilon: f64, trials: usize, seed: u64) -> Result<Vec<CheckEntry>> {
    let mut entries = layer_gradient_checks(epsilon, trials, seed)?;
    entries.extend(architecture_gradient_checks(epsilon, trials, seed)?);
    Ok(entries)
}

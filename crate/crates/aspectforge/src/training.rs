//! Loss, optimizer, and the training/evaluation loops.
//!
//! The loss is mean binary cross-entropy over every (example, label) cell
//! of the batch, with probabilities clipped to `[1e-7, 1 - 1e-7]` before
//! the logarithms; clipped cells contribute zero gradient.
//!
//! The optimizer is Nadam. With step count `t` (starting at 0 and
//! incremented before each update) and decay rates `b1`, `b2`:
//!
//! ```text
//! m <- b1 m + (1 - b1) g             v <- b2 v + (1 - b2) g^2
//! m_hat = m / (1 - b1^(t+1))         g_hat = g / (1 - b1^t)
//! theta <- theta - lr (b1 m_hat + (1 - b1) g_hat) / (sqrt(v / (1 - b2^t)) + eps)
//! ```

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::EncodedExample;
use crate::inference::{apply_cpt, binarize, CptConfig};
use crate::metrics::{compute_report, EvalPair, MetricsReport};
use crate::models::{backward_batch, forward_batch, infer_probs, Network};
use crate::nn::{Matrix, Mode, ParameterSet};
use crate::{Error, Result};

/// Probability clip applied inside the loss.
pub const PROB_CLIP: f64 = 1e-7;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const NADAM_EPS: f64 = 1e-8;

/// Mean binary cross-entropy and its gradient w.r.t. the probabilities.
/// Targets must be exactly 0 or 1.
pub fn bce_loss(targets: &Matrix, probs: &Matrix) -> Result<(f64, Matrix)> {
    if targets.shape() != probs.shape() {
        return Err(Error::shape(format!(
            "targets {:?} vs probabilities {:?}",
            targets.shape(),
            probs.shape()
        )));
    }
    if targets.is_empty() {
        return Err(Error::invalid("loss over an empty batch"));
    }
    let n = targets.len() as f64;
    let mut loss = 0.0;
    let mut grad = Matrix::zeros(probs.rows(), probs.cols());
    for (idx, (&y, &p)) in targets.data().iter().zip(probs.data()).enumerate() {
        if y != 0.0 && y != 1.0 {
            return Err(Error::invalid(format!("target {y} is not a 0/1 indicator")));
        }
        let clipped = !(PROB_CLIP..=1.0 - PROB_CLIP).contains(&p);
        let pc = p.clamp(PROB_CLIP, 1.0 - PROB_CLIP);
        loss -= y * pc.ln() + (1.0 - y) * (1.0 - pc).ln();
        if !clipped {
            grad.data_mut()[idx] = -(y / pc - (1.0 - y) / (1.0 - pc)) / n;
        }
    }
    loss /= n;
    if !loss.is_finite() {
        return Err(Error::non_finite("cross-entropy loss"));
    }
    Ok((loss, grad))
}

/// First and second moment estimates, one slot per parameter tensor.
#[derive(Debug, Clone)]
pub struct NadamState {
    m: Vec<Matrix>,
    v: Vec<Matrix>,
    t: u64,
}

impl NadamState {
    pub fn new(params: &ParameterSet) -> Self {
        let zeros: Vec<Matrix> = params
            .iter()
            .map(|(_, p)| Matrix::zeros(p.value.rows(), p.value.cols()))
            .collect();
        NadamState {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One Nadam update from the gradients currently stored in `params`.
pub fn nadam_step(params: &mut ParameterSet, state: &mut NadamState, lr: f64) -> Result<()> {
    if !lr.is_finite() || lr < 0.0 {
        return Err(Error::invalid(format!("learning rate {lr} must be finite and >= 0")));
    }
    let n_slots = params.names().len();
    if state.m.len() != n_slots {
        return Err(Error::invalid("optimizer state does not match the parameter set"));
    }

    state.t += 1;
    let t = state.t as i32;
    let m_corr = 1.0 - BETA1.powi(t + 1);
    let g_corr = 1.0 - BETA1.powi(t);
    let v_corr = 1.0 - BETA2.powi(t);

    for (slot, (name, p)) in params.iter_mut().enumerate() {
        if state.m[slot].shape() != p.value.shape() {
            return Err(Error::invalid(format!(
                "optimizer slot for {name} has shape {:?}, parameter is {:?}",
                state.m[slot].shape(),
                p.value.shape()
            )));
        }
        let m = state.m[slot].data_mut();
        let v = state.v[slot].data_mut();
        let theta = p.value.data_mut();
        let grads = p.grad.data();
        for i in 0..theta.len() {
            let g = grads[i];
            m[i] = BETA1 * m[i] + (1.0 - BETA1) * g;
            v[i] = BETA2 * v[i] + (1.0 - BETA2) * g * g;
            let m_hat = m[i] / m_corr;
            let g_hat = g / g_corr;
            let update = (BETA1 * m_hat + (1.0 - BETA1) * g_hat)
                / ((v[i] / v_corr).sqrt() + NADAM_EPS);
            theta[i] -= lr * update;
        }
        if !p.value.all_finite() {
            return Err(Error::non_finite(format!("parameter {name} after optimizer step")));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Seeds the epoch shuffles and the dropout masks.
    pub shuffle_seed: u64,
    /// Emit `epoch=<i> loss=<v>` lines on stderr.
    pub log_epochs: bool,
}

impl TrainConfig {
    pub fn new(shuffle_seed: u64) -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 50,
            learning_rate: 1e-3,
            shuffle_seed,
            log_epochs: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Mean training loss per epoch.
    pub epoch_loss: Vec<f64>,
    /// Per-epoch evaluation reports, when the caller interleaves any.
    pub epoch_eval: Option<Vec<MetricsReport>>,
}

/// Trains in place: shuffle, batch, forward, loss, backward, Nadam step.
/// The same network, data, and configuration always produce bit-identical
/// parameters and history.
pub fn train_model(
    net: &mut Network,
    data: &[EncodedExample],
    config: &TrainConfig,
) -> Result<TrainHistory> {
    if data.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    if config.batch_size == 0 {
        return Err(Error::invalid("batch_size must be positive"));
    }
    for (i, ex) in data.iter().enumerate() {
        if ex.target.len() != net.config.n_labels {
            return Err(Error::shape(format!(
                "example {i} has {} targets, label space has {}",
                ex.target.len(),
                net.config.n_labels
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.shuffle_seed);
    let mut opt = NadamState::new(&net.params);
    let mut history = TrainHistory {
        epoch_loss: Vec::with_capacity(config.epochs),
        epoch_eval: None,
    };

    let mut indices: Vec<usize> = (0..data.len()).collect();
    for epoch in 1..=config.epochs {
        indices.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in indices.chunks(config.batch_size) {
            let batch: Vec<EncodedExample> = chunk.iter().map(|&i| data[i].clone()).collect();
            let mut targets = Matrix::zeros(batch.len(), net.config.n_labels);
            for (b, ex) in batch.iter().enumerate() {
                targets.row_mut(b).copy_from_slice(&ex.target);
            }

            net.params.zero_grads();
            let (probs, tape) = forward_batch(net, &batch, Mode::Train, &mut rng)?;
            let (loss, d_probs) = bce_loss(&targets, &probs)?;
            backward_batch(net, tape, &d_probs)?;
            nadam_step(&mut net.params, &mut opt, config.learning_rate)?;
            loss_sum += loss * batch.len() as f64;
        }
        let epoch_loss = loss_sum / data.len() as f64;
        if config.log_epochs {
            eprintln!("epoch={epoch} loss={epoch_loss}");
        }
        history.epoch_loss.push(epoch_loss);
    }
    Ok(history)
}

/// Thresholds inference probabilities, optionally resolves conflicts with
/// the given margin, and scores the result against the gold labels
/// (beta = 1).
pub fn evaluate_model(
    net: &Network,
    data: &[EncodedExample],
    threshold: f64,
    cpt_margin: Option<f64>,
) -> Result<MetricsReport> {
    if data.is_empty() {
        return Err(Error::invalid("evaluation set is empty"));
    }
    let n_labels = net.config.n_labels;
    let mut probs = Matrix::zeros(data.len(), n_labels);
    for (start, chunk) in data.chunks(512).enumerate().map(|(i, c)| (i * 512, c)) {
        let out = infer_probs(net, chunk)?;
        for b in 0..chunk.len() {
            probs.row_mut(start + b).copy_from_slice(out.row(b));
        }
    }

    let raw = binarize(&probs, threshold)?;
    let predicted = match cpt_margin {
        Some(margin) => {
            let cfg = CptConfig {
                decision_threshold: threshold,
                cpt_margin: margin,
            };
            apply_cpt(&probs, &raw, &cfg)?.sets
        }
        None => raw,
    };

    let pairs: Vec<EvalPair> = data
        .iter()
        .zip(predicted)
        .map(|(ex, pred)| {
            let gold: Vec<usize> = ex
                .target
                .iter()
                .enumerate()
                .filter(|(_, &v)| v == 1.0)
                .map(|(j, _)| j)
                .collect();
            EvalPair::new(pred, gold)
        })
        .collect();
    compute_report(&pairs, n_labels, 1.0, cpt_margin.is_some())
}

//! Model assembly: the four architectures, batched forward and backward
//! passes, and checkpoint I/O.
//!
//! Every architecture shares the same skeleton: an embedding lookup, a
//! sequence encoder that reduces the token matrix to one feature vector,
//! dropout, optional batch normalization, and a sigmoid dense head with one
//! output per joint label. The encoders differ only in the middle stage:
//!
//! * `cnn`: 1-D convolution with global max pooling;
//! * `lstm` / `gru`: final hidden state of the recurrent pass;
//! * `bilstm`: concatenated final states of a forward and a time-reversed
//!   LSTM.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write as _};
use std::path::Path;

use indexmap::IndexMap;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{build_label_space, EncodedExample, LabelSpace, Vocabulary};
use crate::nn::batchnorm::{
    batchnorm_backward, batchnorm_infer_forward, batchnorm_train_forward, BatchNormState,
    BatchNormTape,
};
use crate::nn::conv::{conv_maxpool_backward, conv_maxpool_forward, ConvTape};
use crate::nn::dense::{dense_backward, dense_forward, Activation, DenseTape};
use crate::nn::dropout::{dropout_backward, dropout_forward, DropoutTape};
use crate::nn::embedding::{embedding_backward, embedding_forward, EmbeddingTape};
use crate::nn::matrix::add_scaled;
use crate::nn::params::{glorot_matrix, orthogonal_matrix, uniform_matrix};
use crate::nn::recurrent::{
    bilstm_sequence_backward, bilstm_sequence_forward, gru_sequence_backward,
    gru_sequence_forward, lstm_sequence_backward, lstm_sequence_forward, BiLstmTape, GruTape,
    GruWeights, LstmTape, LstmWeights,
};
use crate::nn::{Matrix, Mode, ParameterSet};
use crate::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "aspectforge.checkpoint.v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArchitectureKind {
    Cnn,
    Lstm,
    BiLstm,
    Gru,
}

pub const ALL_ARCHITECTURES: [ArchitectureKind; 4] = [
    ArchitectureKind::Cnn,
    ArchitectureKind::Lstm,
    ArchitectureKind::BiLstm,
    ArchitectureKind::Gru,
];

impl ArchitectureKind {
    pub fn name(self) -> &'static str {
        match self {
            ArchitectureKind::Cnn => "cnn",
            ArchitectureKind::Lstm => "lstm",
            ArchitectureKind::BiLstm => "bilstm",
            ArchitectureKind::Gru => "gru",
        }
    }
}

impl std::fmt::Display for ArchitectureKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ArchitectureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cnn" => Ok(ArchitectureKind::Cnn),
            "lstm" => Ok(ArchitectureKind::Lstm),
            "bilstm" => Ok(ArchitectureKind::BiLstm),
            "gru" => Ok(ArchitectureKind::Gru),
            other => Err(Error::invalid(format!(
                "unknown architecture {other:?}, expected cnn, lstm, bilstm, or gru"
            ))),
        }
    }
}

/// Shape and regularization settings of one network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub n_labels: usize,
    pub embedding_dim: usize,
    pub maxlen: usize,
    pub hidden_units: usize,
    pub conv_filters: usize,
    pub kernel_size: usize,
    pub dropout_rate: f64,
    pub batchnorm: bool,
}

impl ModelConfig {
    /// Reference defaults; only the data-dependent sizes are required.
    pub fn new(vocab_size: usize, n_labels: usize) -> Self {
        ModelConfig {
            vocab_size,
            n_labels,
            embedding_dim: 300,
            maxlen: 103,
            hidden_units: 200,
            conv_filters: 256,
            kernel_size: 3,
            dropout_rate: 0.5,
            batchnorm: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 2 {
            return Err(Error::invalid("vocab_size must cover the two reserved indices"));
        }
        if self.n_labels == 0 || self.n_labels % 2 != 0 {
            return Err(Error::invalid(format!(
                "n_labels must be positive and even, got {}",
                self.n_labels
            )));
        }
        for (name, v) in [
            ("embedding_dim", self.embedding_dim),
            ("maxlen", self.maxlen),
            ("hidden_units", self.hidden_units),
            ("conv_filters", self.conv_filters),
            ("kernel_size", self.kernel_size),
        ] {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        if self.kernel_size > self.maxlen {
            return Err(Error::invalid(format!(
                "kernel_size {} exceeds maxlen {}",
                self.kernel_size, self.maxlen
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::invalid(format!(
                "dropout_rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        Ok(())
    }

    /// Width of the feature vector entering the dense head.
    pub fn feature_width(&self, kind: ArchitectureKind) -> usize {
        match kind {
            ArchitectureKind::Cnn => self.conv_filters,
            ArchitectureKind::Lstm | ArchitectureKind::Gru => self.hidden_units,
            ArchitectureKind::BiLstm => 2 * self.hidden_units,
        }
    }
}

const LSTM_GATES: [char; 4] = ['f', 'i', 'c', 'o'];
const GRU_GATES: [char; 3] = ['z', 'r', 'h'];

/// Canonical parameter names and shapes, in registration order. Both
/// network construction and checkpoint loading follow this layout.
pub fn param_layout(kind: ArchitectureKind, config: &ModelConfig) -> Vec<(String, usize, usize)> {
    let d = config.embedding_dim;
    let h = config.hidden_units;
    let mut layout = vec![("embedding".to_string(), config.vocab_size, d)];
    match kind {
        ArchitectureKind::Cnn => {
            layout.push(("conv.kernels".to_string(), config.conv_filters, config.kernel_size * d));
            layout.push(("conv.bias".to_string(), 1, config.conv_filters));
        }
        ArchitectureKind::Lstm => {
            for g in LSTM_GATES {
                layout.push((format!("lstm.w_{g}"), h, h + d));
                layout.push((format!("lstm.b_{g}"), 1, h));
            }
        }
        ArchitectureKind::BiLstm => {
            for dir in ["fwd", "bwd"] {
                for g in LSTM_GATES {
                    layout.push((format!("lstm_{dir}.w_{g}"), h, h + d));
                    layout.push((format!("lstm_{dir}.b_{g}"), 1, h));
                }
            }
        }
        ArchitectureKind::Gru => {
            for g in GRU_GATES {
                layout.push((format!("gru.w_{g}"), h, h + d));
            }
        }
    }
    let width = config.feature_width(kind);
    if config.batchnorm {
        layout.push(("bn.gamma".to_string(), 1, width));
        layout.push(("bn.beta".to_string(), 1, width));
    }
    layout.push(("dense.w".to_string(), config.n_labels, width));
    layout.push(("dense.b".to_string(), 1, config.n_labels));
    layout
}

/// A model: architecture, configuration, parameters, and (when batch
/// normalization is on) the running statistics.
#[derive(Debug, Clone)]
pub struct Network {
    pub kind: ArchitectureKind,
    pub config: ModelConfig,
    pub params: ParameterSet,
    pub batchnorm: Option<BatchNormState>,
}

/// Gate matrix `H x (H + d)`: orthogonal hidden-to-hidden block, Glorot
/// input block.
fn recurrent_gate_matrix(rng: &mut ChaCha8Rng, hidden: usize, dim: usize) -> Matrix {
    let orth = orthogonal_matrix(rng, hidden);
    let input = glorot_matrix(rng, hidden, dim, dim, hidden);
    let mut w = Matrix::zeros(hidden, hidden + dim);
    for r in 0..hidden {
        w.row_mut(r)[..hidden].copy_from_slice(orth.row(r));
        w.row_mut(r)[hidden..].copy_from_slice(input.row(r));
    }
    w
}

/// Builds a freshly initialized network. The same (kind, config, seed)
/// always yields bit-identical parameters.
pub fn build_network(kind: ArchitectureKind, config: &ModelConfig, seed: u64) -> Result<Network> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParameterSet::new();
    let d = config.embedding_dim;
    let h = config.hidden_units;

    params.register(
        "embedding",
        uniform_matrix(&mut rng, config.vocab_size, d, -0.05, 0.05),
    )?;
    match kind {
        ArchitectureKind::Cnn => {
            let cols = config.kernel_size * d;
            params.register(
                "conv.kernels",
                glorot_matrix(&mut rng, config.conv_filters, cols, cols, config.conv_filters),
            )?;
            params.register("conv.bias", Matrix::zeros(1, config.conv_filters))?;
        }
        ArchitectureKind::Lstm => {
            register_lstm(&mut params, &mut rng, "lstm", h, d)?;
        }
        ArchitectureKind::BiLstm => {
            register_lstm(&mut params, &mut rng, "lstm_fwd", h, d)?;
            register_lstm(&mut params, &mut rng, "lstm_bwd", h, d)?;
        }
        ArchitectureKind::Gru => {
            for g in GRU_GATES {
                let name = format!("gru.w_{g}");
                params.register(&name, recurrent_gate_matrix(&mut rng, h, d))?;
            }
        }
    }

    let width = config.feature_width(kind);
    if config.batchnorm {
        let mut gamma = Matrix::zeros(1, width);
        gamma.fill(1.0);
        params.register("bn.gamma", gamma)?;
        params.register("bn.beta", Matrix::zeros(1, width))?;
    }
    params.register(
        "dense.w",
        glorot_matrix(&mut rng, config.n_labels, width, width, config.n_labels),
    )?;
    params.register("dense.b", Matrix::zeros(1, config.n_labels))?;

    Ok(Network {
        kind,
        config: config.clone(),
        params,
        batchnorm: config.batchnorm.then(|| BatchNormState::new(width)),
    })
}

fn register_lstm(
    params: &mut ParameterSet,
    rng: &mut ChaCha8Rng,
    prefix: &str,
    hidden: usize,
    dim: usize,
) -> Result<()> {
    for g in LSTM_GATES {
        params.register(&format!("{prefix}.w_{g}"), recurrent_gate_matrix(rng, hidden, dim))?;
        let mut bias = Matrix::zeros(1, hidden);
        // Open forget gates keep early gradients flowing.
        if g == 'f' {
            bias.fill(1.0);
        }
        params.register(&format!("{prefix}.b_{g}"), bias)?;
    }
    Ok(())
}

fn lstm_weights<'a>(params: &'a ParameterSet, prefix: &str) -> LstmWeights<'a> {
    LstmWeights {
        w_f: params.value(&format!("{prefix}.w_f")),
        w_i: params.value(&format!("{prefix}.w_i")),
        w_c: params.value(&format!("{prefix}.w_c")),
        w_o: params.value(&format!("{prefix}.w_o")),
        b_f: params.value(&format!("{prefix}.b_f")).row(0),
        b_i: params.value(&format!("{prefix}.b_i")).row(0),
        b_c: params.value(&format!("{prefix}.b_c")).row(0),
        b_o: params.value(&format!("{prefix}.b_o")).row(0),
    }
}

fn gru_weights(params: &ParameterSet) -> GruWeights<'_> {
    GruWeights {
        w_z: params.value("gru.w_z"),
        w_r: params.value("gru.w_r"),
        w_h: params.value("gru.w_h"),
    }
}

#[derive(Debug)]
enum FeatureTape {
    Conv(ConvTape),
    Lstm(Box<LstmTape>),
    BiLstm(Box<BiLstmTape>),
    Gru(Box<GruTape>),
}

#[derive(Debug)]
struct ExampleTape {
    emb: EmbeddingTape,
    feat: FeatureTape,
    dropout: DropoutTape,
}

#[derive(Debug)]
struct TrainTape {
    examples: Vec<ExampleTape>,
    bn: Option<BatchNormTape>,
    dense: Vec<DenseTape>,
}

/// Record of one batched forward pass; consumed by [`backward_batch`].
/// Inference passes keep no internals and cannot be backpropagated.
#[derive(Debug)]
pub struct BatchTape {
    mode: Mode,
    inner: Option<TrainTape>,
}

impl BatchTape {
    pub fn mode(&self) -> Mode {
        self.mode
    }
}

/// Embedding + encoder for one example; the tapes own every intermediate.
fn encode_features(
    params: &ParameterSet,
    kind: ArchitectureKind,
    kernel_size: usize,
    tokens: &[usize],
) -> Result<(Vec<f64>, EmbeddingTape, FeatureTape)> {
    let (x, emb_tape) = embedding_forward(tokens, params.value("embedding"))?;
    let (feat, feat_tape) = match kind {
        ArchitectureKind::Cnn => {
            let (f, t) = conv_maxpool_forward(
                x,
                params.value("conv.kernels"),
                params.value("conv.bias").row(0),
                kernel_size,
            )?;
            (f, FeatureTape::Conv(t))
        }
        ArchitectureKind::Lstm => {
            let (f, t) = lstm_sequence_forward(x, &lstm_weights(params, "lstm"))?;
            (f, FeatureTape::Lstm(Box::new(t)))
        }
        ArchitectureKind::BiLstm => {
            let (f, t) = bilstm_sequence_forward(
                x,
                &lstm_weights(params, "lstm_fwd"),
                &lstm_weights(params, "lstm_bwd"),
            )?;
            (f, FeatureTape::BiLstm(Box::new(t)))
        }
        ArchitectureKind::Gru => {
            let (f, t) = gru_sequence_forward(x, &gru_weights(params))?;
            (f, FeatureTape::Gru(Box::new(t)))
        }
    };
    Ok((feat, emb_tape, feat_tape))
}

fn check_batch(net: &Network, batch: &[EncodedExample]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::invalid("forward pass on an empty batch"));
    }
    for (i, ex) in batch.iter().enumerate() {
        if ex.tokens.len() != net.config.maxlen {
            return Err(Error::shape(format!(
                "example {i} has {} tokens, expected maxlen {}",
                ex.tokens.len(),
                net.config.maxlen
            )));
        }
    }
    Ok(())
}

/// Runs the network over a batch. Training mode applies dropout (driven by
/// `rng`) and batch statistics; it returns the tape for [`backward_batch`].
pub fn forward_batch(
    net: &mut Network,
    batch: &[EncodedExample],
    mode: Mode,
    rng: &mut ChaCha8Rng,
) -> Result<(Matrix, BatchTape)> {
    check_batch(net, batch)?;
    if mode == Mode::Infer {
        let probs = infer_probs(net, batch)?;
        return Ok((
            probs,
            BatchTape {
                mode,
                inner: None,
            },
        ));
    }

    let width = net.config.feature_width(net.kind);
    let mut examples = Vec::with_capacity(batch.len());
    let mut feats = Matrix::zeros(batch.len(), width);
    for (b, ex) in batch.iter().enumerate() {
        let (feat, emb, feat_tape) =
            encode_features(&net.params, net.kind, net.config.kernel_size, &ex.tokens)?;
        let (dropped, drop_tape) =
            dropout_forward(&feat, net.config.dropout_rate, Mode::Train, rng)?;
        feats.row_mut(b).copy_from_slice(&dropped);
        examples.push(ExampleTape {
            emb,
            feat: feat_tape,
            dropout: drop_tape,
        });
    }

    let (normed, bn_tape) = match net.batchnorm.as_mut() {
        Some(state) => {
            let (out, tape) = batchnorm_train_forward(
                &feats,
                net.params.value("bn.gamma").row(0),
                net.params.value("bn.beta").row(0),
                state,
            )?;
            (out, Some(tape))
        }
        None => (feats, None),
    };

    let mut probs = Matrix::zeros(batch.len(), net.config.n_labels);
    let mut dense_tapes = Vec::with_capacity(batch.len());
    for b in 0..batch.len() {
        let (out, tape) = dense_forward(
            normed.row(b),
            net.params.value("dense.w"),
            net.params.value("dense.b").row(0),
            Activation::Sigmoid,
        )?;
        probs.row_mut(b).copy_from_slice(&out);
        dense_tapes.push(tape);
    }

    Ok((
        probs,
        BatchTape {
            mode,
            inner: Some(TrainTape {
                examples,
                bn: bn_tape,
                dense: dense_tapes,
            }),
        },
    ))
}

/// Inference probabilities: dropout disabled, batch statistics frozen.
pub fn infer_probs(net: &Network, batch: &[EncodedExample]) -> Result<Matrix> {
    check_batch(net, batch)?;
    let width = net.config.feature_width(net.kind);
    let mut feats = Matrix::zeros(batch.len(), width);
    for (b, ex) in batch.iter().enumerate() {
        let (feat, _, _) =
            encode_features(&net.params, net.kind, net.config.kernel_size, &ex.tokens)?;
        feats.row_mut(b).copy_from_slice(&feat);
    }

    let normed = match net.batchnorm.as_ref() {
        Some(state) => batchnorm_infer_forward(
            &feats,
            net.params.value("bn.gamma").row(0),
            net.params.value("bn.beta").row(0),
            state,
        )?,
        None => feats,
    };

    let mut probs = Matrix::zeros(batch.len(), net.config.n_labels);
    for b in 0..batch.len() {
        let (out, _) = dense_forward(
            normed.row(b),
            net.params.value("dense.w"),
            net.params.value("dense.b").row(0),
            Activation::Sigmoid,
        )?;
        probs.row_mut(b).copy_from_slice(&out);
    }
    Ok(probs)
}

/// Backpropagates `d_probs` through a training-mode tape, accumulating
/// into the parameter gradients (which are not zeroed here).
pub fn backward_batch(net: &mut Network, tape: BatchTape, d_probs: &Matrix) -> Result<()> {
    if tape.mode != Mode::Train {
        return Err(Error::invalid("backward pass through an inference tape"));
    }
    let inner = tape
        .inner
        .ok_or_else(|| Error::invalid("backward pass through an empty tape"))?;
    let batch = inner.examples.len();
    if d_probs.shape() != (batch, net.config.n_labels) {
        return Err(Error::shape(format!(
            "output gradient shape {:?} does not match ({batch}, {})",
            d_probs.shape(),
            net.config.n_labels
        )));
    }

    // Local accumulators, flushed into the parameter set at the end so the
    // layer passes can borrow parameter values freely.
    let mut acc: IndexMap<String, Matrix> = net
        .params
        .iter()
        .map(|(name, p)| (name.to_string(), Matrix::zeros(p.value.rows(), p.value.cols())))
        .collect();

    let width = net.config.feature_width(net.kind);
    let mut d_normed = Matrix::zeros(batch, width);
    for (b, dense_tape) in inner.dense.iter().enumerate() {
        let (d_in, d_w, d_b) = dense_backward(dense_tape, net.params.value("dense.w"), d_probs.row(b));
        d_normed.row_mut(b).copy_from_slice(&d_in);
        acc["dense.w"].add_scaled_matrix(&d_w, 1.0);
        add_scaled(acc["dense.b"].row_mut(0), &d_b, 1.0);
    }

    let d_feats = match inner.bn.as_ref() {
        Some(bn_tape) => {
            let (d_x, d_gamma, d_beta) =
                batchnorm_backward(bn_tape, net.params.value("bn.gamma").row(0), &d_normed);
            add_scaled(acc["bn.gamma"].row_mut(0), &d_gamma, 1.0);
            add_scaled(acc["bn.beta"].row_mut(0), &d_beta, 1.0);
            d_x
        }
        None => d_normed,
    };

    for (b, ex) in inner.examples.into_iter().enumerate() {
        let d_feat = dropout_backward(&ex.dropout, d_feats.row(b));
        let d_x = match ex.feat {
            FeatureTape::Conv(t) => {
                let (d_x, d_k, d_bias) =
                    conv_maxpool_backward(t, net.params.value("conv.kernels"), &d_feat);
                acc["conv.kernels"].add_scaled_matrix(&d_k, 1.0);
                add_scaled(acc["conv.bias"].row_mut(0), &d_bias, 1.0);
                d_x
            }
            FeatureTape::Lstm(t) => {
                let (d_x, grads) = lstm_sequence_backward(*t, &lstm_weights(&net.params, "lstm"), &d_feat);
                flush_lstm_grads(&mut acc, "lstm", grads);
                d_x
            }
            FeatureTape::BiLstm(t) => {
                let (d_x, g_fwd, g_bwd) = bilstm_sequence_backward(
                    *t,
                    &lstm_weights(&net.params, "lstm_fwd"),
                    &lstm_weights(&net.params, "lstm_bwd"),
                    &d_feat,
                );
                flush_lstm_grads(&mut acc, "lstm_fwd", g_fwd);
                flush_lstm_grads(&mut acc, "lstm_bwd", g_bwd);
                d_x
            }
            FeatureTape::Gru(t) => {
                let (d_x, grads) = gru_sequence_backward(*t, &gru_weights(&net.params), &d_feat);
                acc["gru.w_z"].add_scaled_matrix(&grads.w_z, 1.0);
                acc["gru.w_r"].add_scaled_matrix(&grads.w_r, 1.0);
                acc["gru.w_h"].add_scaled_matrix(&grads.w_h, 1.0);
                d_x
            }
        };
        embedding_backward(ex.emb, &d_x, &mut acc["embedding"]);
    }

    for (name, grad) in &acc {
        net.params.add_to_grad(name, grad);
    }
    Ok(())
}

fn flush_lstm_grads(
    acc: &mut IndexMap<String, Matrix>,
    prefix: &str,
    grads: crate::nn::recurrent::LstmGrads,
) {
    acc[&format!("{prefix}.w_f")].add_scaled_matrix(&grads.w_f, 1.0);
    acc[&format!("{prefix}.w_i")].add_scaled_matrix(&grads.w_i, 1.0);
    acc[&format!("{prefix}.w_c")].add_scaled_matrix(&grads.w_c, 1.0);
    acc[&format!("{prefix}.w_o")].add_scaled_matrix(&grads.w_o, 1.0);
    add_scaled(acc[&format!("{prefix}.b_f")].row_mut(0), &grads.b_f, 1.0);
    add_scaled(acc[&format!("{prefix}.b_i")].row_mut(0), &grads.b_i, 1.0);
    add_scaled(acc[&format!("{prefix}.b_c")].row_mut(0), &grads.b_c, 1.0);
    add_scaled(acc[&format!("{prefix}.b_o")].row_mut(0), &grads.b_o, 1.0);
}

#[derive(Serialize, Deserialize)]
struct ParamRecord {
    name: String,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointHashes {
    vocab: String,
    label_space: String,
    params: String,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    arch: ArchitectureKind,
    config: ModelConfig,
    aspects: Vec<String>,
    vocab_words: Vec<String>,
    vocab_freqs: Vec<u64>,
    params: Vec<ParamRecord>,
    batchnorm: Option<BatchNormState>,
    hashes: CheckpointHashes,
}

fn params_digest(records: &[ParamRecord], batchnorm: &Option<BatchNormState>) -> String {
    let mut hasher = Sha256::new();
    for r in records {
        hasher.update(r.name.as_bytes());
        hasher.update([0u8]);
        hasher.update((r.rows as u64).to_le_bytes());
        hasher.update((r.cols as u64).to_le_bytes());
        for v in &r.data {
            hasher.update(v.to_le_bytes());
        }
    }
    if let Some(bn) = batchnorm {
        for v in bn.running_mean.iter().chain(&bn.running_var) {
            hasher.update(v.to_le_bytes());
        }
        hasher.update(bn.momentum.to_le_bytes());
        hasher.update(bn.eps.to_le_bytes());
    }
    crate::corpus::hex(&hasher.finalize())
}

/// Writes the model, its vocabulary, and its label space as one JSON file
/// with integrity hashes over all three.
pub fn save_checkpoint(
    path: impl AsRef<Path>,
    net: &Network,
    vocab: &Vocabulary,
    space: &LabelSpace,
) -> Result<()> {
    if net.config.vocab_size != vocab.size() {
        return Err(Error::invalid(format!(
            "network vocab_size {} != vocabulary size {}",
            net.config.vocab_size,
            vocab.size()
        )));
    }
    if net.config.n_labels != space.n_labels() {
        return Err(Error::invalid(format!(
            "network n_labels {} != label space width {}",
            net.config.n_labels,
            space.n_labels()
        )));
    }
    let records: Vec<ParamRecord> = net
        .params
        .iter()
        .map(|(name, p)| ParamRecord {
            name: name.to_string(),
            rows: p.value.rows(),
            cols: p.value.cols(),
            data: p.value.data().to_vec(),
        })
        .collect();
    let file = CheckpointFile {
        format: CHECKPOINT_FORMAT.to_string(),
        arch: net.kind,
        config: net.config.clone(),
        aspects: space.aspects().to_vec(),
        vocab_words: vocab.words().to_vec(),
        vocab_freqs: vocab.freqs().to_vec(),
        hashes: CheckpointHashes {
            vocab: vocab.hash(),
            label_space: space.hash(),
            params: params_digest(&records, &net.batchnorm),
        },
        params: records,
        batchnorm: net.batchnorm.clone(),
    };
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut w, &file)?;
    w.flush()?;
    Ok(())
}

/// Loads a checkpoint, verifying the vocabulary, label-space, and
/// parameter hashes and every recorded shape before accepting it.
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(Network, Vocabulary, LabelSpace)> {
    let reader = BufReader::new(File::open(path)?);
    let file: CheckpointFile = serde_json::from_reader(reader)
        .map_err(|e| Error::Checkpoint(format!("unreadable checkpoint: {e}")))?;
    if file.format != CHECKPOINT_FORMAT {
        return Err(Error::Checkpoint(format!(
            "unsupported format {:?}, expected {CHECKPOINT_FORMAT:?}",
            file.format
        )));
    }

    let vocab = Vocabulary::from_parts(file.vocab_words, file.vocab_freqs)
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
    let space = build_label_space(&file.aspects).map_err(|e| Error::Checkpoint(e.to_string()))?;

    let checks = [
        ("vocabulary", &file.hashes.vocab, vocab.hash()),
        ("label space", &file.hashes.label_space, space.hash()),
        (
            "parameters",
            &file.hashes.params,
            params_digest(&file.params, &file.batchnorm),
        ),
    ];
    for (what, stored, computed) in checks {
        if *stored != computed {
            return Err(Error::HashMismatch {
                what: what.to_string(),
                stored: stored.clone(),
                computed,
            });
        }
    }

    let config = file.config;
    config.validate().map_err(|e| Error::Checkpoint(e.to_string()))?;
    if config.vocab_size != vocab.size() {
        return Err(Error::Checkpoint(format!(
            "config vocab_size {} != stored vocabulary size {}",
            config.vocab_size,
            vocab.size()
        )));
    }
    if config.n_labels != space.n_labels() {
        return Err(Error::Checkpoint(format!(
            "config n_labels {} != stored label space width {}",
            config.n_labels,
            space.n_labels()
        )));
    }

    let layout = param_layout(file.arch, &config);
    if file.params.len() != layout.len() {
        return Err(Error::Checkpoint(format!(
            "expected {} parameter tensors, found {}",
            layout.len(),
            file.params.len()
        )));
    }
    let mut params = ParameterSet::new();
    for (record, (name, rows, cols)) in file.params.into_iter().zip(layout) {
        if record.name != name || record.rows != rows || record.cols != cols {
            return Err(Error::Checkpoint(format!(
                "parameter {:?} ({}x{}) does not match expected {name:?} ({rows}x{cols})",
                record.name, record.rows, record.cols
            )));
        }
        let value = Matrix::from_vec(rows, cols, record.data)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        if !value.all_finite() {
            return Err(Error::non_finite(format!("checkpoint parameter {name}")));
        }
        params.register(&name, value)?;
    }

    let width = config.feature_width(file.arch);
    let batchnorm = match (&file.batchnorm, config.batchnorm) {
        (Some(bn), true) => {
            if bn.running_mean.len() != width || bn.running_var.len() != width {
                return Err(Error::Checkpoint(
                    "running statistics width does not match the feature width".into(),
                ));
            }
            Some(bn.clone())
        }
        (None, false) => None,
        _ => {
            return Err(Error::Checkpoint(
                "batch normalization state does not match the configuration".into(),
            ));
        }
    };

    Ok((
        Network {
            kind: file.arch,
            config,
            params,
            batchnorm,
        },
        vocab,
        space,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{fit_vocabulary, Review};
    use rand::Rng;

    fn tiny_config(batchnorm: bool) -> ModelConfig {
        ModelConfig {
            vocab_size: 12,
            n_labels: 4,
            embedding_dim: 4,
            maxlen: 6,
            hidden_units: 5,
            conv_filters: 3,
            kernel_size: 2,
            dropout_rate: 0.5,
            batchnorm,
        }
    }

    fn tiny_batch(config: &ModelConfig, n: usize, seed: u64) -> Vec<EncodedExample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| EncodedExample {
                tokens: (0..config.maxlen)
                    .map(|_| rng.random_range(0..config.vocab_size))
                    .collect(),
                target: (0..config.n_labels)
                    .map(|_| if rng.random_bool(0.3) { 1.0 } else { 0.0 })
                    .collect(),
            })
            .collect()
    }

    #[test]
    fn registration_follows_the_canonical_layout() {
        for kind in ALL_ARCHITECTURES {
            for bn in [true, false] {
                let config = tiny_config(bn);
                let net = build_network(kind, &config, 3).unwrap();
                let expected = param_layout(kind, &config);
                let actual: Vec<(String, usize, usize)> = net
                    .params
                    .iter()
                    .map(|(n, p)| (n.to_string(), p.value.rows(), p.value.cols()))
                    .collect();
                assert_eq!(actual, expected, "{kind} bn={bn}");
            }
        }
    }

    /// Parameter totals recomputed from first principles, not via
    /// `param_layout`.
    #[test]
    fn parameter_counts_match_shape_arithmetic() {
        let c = tiny_config(true);
        let (v, d, h, f, k, q) = (12usize, 4usize, 5usize, 3usize, 2usize, 4usize);
        let gate = h * (h + d);
        let expected = [
            (ArchitectureKind::Cnn, v * d + f * (k * d) + f + 2 * f + q * f + q),
            (ArchitectureKind::Lstm, v * d + 4 * (gate + h) + 2 * h + q * h + q),
            (
                ArchitectureKind::BiLstm,
                v * d + 8 * (gate + h) + 2 * (2 * h) + q * (2 * h) + q,
            ),
            (ArchitectureKind::Gru, v * d + 3 * gate + 2 * h + q * h + q),
        ];
        for (kind, count) in expected {
            let net = build_network(kind, &c, 1).unwrap();
            assert_eq!(net.params.total_len(), count, "{kind}");
        }
    }

    #[test]
    fn builds_are_seed_deterministic() {
        let config = tiny_config(true);
        for kind in ALL_ARCHITECTURES {
            let a = build_network(kind, &config, 5).unwrap();
            let b = build_network(kind, &config, 5).unwrap();
            let c = build_network(kind, &config, 6).unwrap();
            for (name, p) in a.params.iter() {
                assert_eq!(p.value, *b.params.value(name), "{kind} {name}");
            }
            assert_ne!(
                a.params.value("embedding"),
                c.params.value("embedding"),
                "{kind} seeds collide"
            );
        }
    }

    #[test]
    fn forget_gate_bias_starts_open() {
        let net = build_network(ArchitectureKind::Lstm, &tiny_config(true), 0).unwrap();
        assert!(net.params.value("lstm.b_f").data().iter().all(|&v| v == 1.0));
        assert!(net.params.value("lstm.b_i").data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zeroed_head_outputs_exactly_half() {
        let config = tiny_config(false);
        for kind in ALL_ARCHITECTURES {
            let mut net = build_network(kind, &config, 2).unwrap();
            net.params.value_mut("dense.w").fill(0.0);
            net.params.value_mut("dense.b").fill(0.0);
            let batch = tiny_batch(&config, 3, 0);
            let probs = infer_probs(&net, &batch).unwrap();
            assert!(probs.data().iter().all(|&p| p == 0.5), "{kind}");
        }
    }

    #[test]
    fn probabilities_are_strictly_inside_unit_interval() {
        let config = tiny_config(true);
        for kind in ALL_ARCHITECTURES {
            let mut net = build_network(kind, &config, 7).unwrap();
            let batch = tiny_batch(&config, 4, 1);
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let (probs, tape) = forward_batch(&mut net, &batch, Mode::Train, &mut rng).unwrap();
            assert_eq!(probs.shape(), (4, config.n_labels));
            assert!(probs.data().iter().all(|&p| p > 0.0 && p < 1.0), "{kind}");
            assert_eq!(tape.mode(), Mode::Train);
        }
    }

    #[test]
    fn inference_is_deterministic_and_composes_over_examples() {
        let config = tiny_config(true);
        for kind in ALL_ARCHITECTURES {
            let net = build_network(kind, &config, 11).unwrap();
            let batch = tiny_batch(&config, 2, 3);
            let together = infer_probs(&net, &batch).unwrap();
            let again = infer_probs(&net, &batch).unwrap();
            assert_eq!(together, again, "{kind} inference not deterministic");
            let first = infer_probs(&net, &batch[..1]).unwrap();
            let second = infer_probs(&net, &batch[1..]).unwrap();
            assert_eq!(together.row(0), first.row(0), "{kind}");
            assert_eq!(together.row(1), second.row(0), "{kind}");
        }
    }

    #[test]
    fn batch_and_length_validation() {
        let config = tiny_config(true);
        let mut net = build_network(ArchitectureKind::Cnn, &config, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(forward_batch(&mut net, &[], Mode::Train, &mut rng).is_err());
        let bad = vec![EncodedExample {
            tokens: vec![0; config.maxlen + 1],
            target: vec![0.0; config.n_labels],
        }];
        assert!(infer_probs(&net, &bad).is_err());
    }

    #[test]
    fn backward_rejects_inference_tapes() {
        let config = tiny_config(true);
        let mut net = build_network(ArchitectureKind::Gru, &config, 0).unwrap();
        let batch = tiny_batch(&config, 2, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (probs, tape) = forward_batch(&mut net, &batch, Mode::Infer, &mut rng).unwrap();
        let d = Matrix::zeros(probs.rows(), probs.cols());
        assert!(backward_batch(&mut net, tape, &d).is_err());
    }

    #[test]
    fn zero_output_gradient_leaves_gradients_zero() {
        let config = tiny_config(true);
        for kind in ALL_ARCHITECTURES {
            let mut net = build_network(kind, &config, 13).unwrap();
            let batch = tiny_batch(&config, 2, 5);
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let (probs, tape) = forward_batch(&mut net, &batch, Mode::Train, &mut rng).unwrap();
            backward_batch(&mut net, tape, &Matrix::zeros(probs.rows(), probs.cols())).unwrap();
            for (name, p) in net.params.iter() {
                assert!(
                    p.grad.data().iter().all(|&g| g == 0.0),
                    "{kind} {name} picked up gradient from nothing"
                );
            }
        }
    }

    #[test]
    fn gradients_accumulate_across_backward_calls() {
        let config = ModelConfig {
            dropout_rate: 0.0,
            ..tiny_config(true)
        };
        let mut net = build_network(ArchitectureKind::Lstm, &config, 3).unwrap();
        let batch = tiny_batch(&config, 2, 7);
        let mut d = Matrix::zeros(2, config.n_labels);
        d.fill(0.25);

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (_, tape) = forward_batch(&mut net, &batch, Mode::Train, &mut rng).unwrap();
        backward_batch(&mut net, tape, &d).unwrap();
        let single: Vec<Matrix> = net.params.iter().map(|(_, p)| p.grad.clone()).collect();

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (_, tape) = forward_batch(&mut net, &batch, Mode::Train, &mut rng).unwrap();
        backward_batch(&mut net, tape, &d).unwrap();
        for ((_, p), s) in net.params.iter().zip(&single) {
            for (a, b) in p.grad.data().iter().zip(s.data()) {
                assert_eq!(*a, 2.0 * b);
            }
        }
    }

    /// With dropout off and batch statistics disabled, the loss gradient is
    /// additive over examples, so two half-batches reproduce the full-batch
    /// gradient up to summation-order rounding.
    #[test]
    fn half_batches_sum_to_the_full_batch_gradient() {
        let config = ModelConfig {
            dropout_rate: 0.0,
            ..tiny_config(false)
        };
        for kind in ALL_ARCHITECTURES {
            let mut net = build_network(kind, &config, 17).unwrap();
            let batch = tiny_batch(&config, 4, 9);
            let mut d = Matrix::zeros(4, config.n_labels);
            for (i, v) in d.data_mut().iter_mut().enumerate() {
                *v = (i as f64 - 3.0) * 0.1;
            }

            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let (_, tape) = forward_batch(&mut net, &batch, Mode::Train, &mut rng).unwrap();
            backward_batch(&mut net, tape, &d).unwrap();
            let full: Vec<Matrix> = net.params.iter().map(|(_, p)| p.grad.clone()).collect();

            net.params.zero_grads();
            for half in [0..2usize, 2..4] {
                let mut rng = ChaCha8Rng::seed_from_u64(0);
                let (_, tape) =
                    forward_batch(&mut net, &batch[half.clone()], Mode::Train, &mut rng).unwrap();
                let mut dh = Matrix::zeros(2, config.n_labels);
                for (b, row) in half.clone().enumerate() {
                    dh.row_mut(b).copy_from_slice(d.row(row));
                }
                backward_batch(&mut net, tape, &dh).unwrap();
            }
            for ((name, p), f) in net.params.iter().zip(&full) {
                for (a, b) in p.grad.data().iter().zip(f.data()) {
                    let rel = (a - b).abs() / a.abs().max(b.abs()).max(1e-12);
                    assert!(rel < 1e-12, "{kind} {name} gradient not additive: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn checkpoint_round_trips_bit_for_bit() {
        let dir = tempfile::tempdir().unwrap();
        let space = build_label_space(&["food", "service"]).unwrap();
        let reviews = vec![Review::new("tasty food nice staff", vec![0], &space).unwrap()];
        let vocab = fit_vocabulary(&reviews, None).unwrap();
        let config = ModelConfig {
            vocab_size: vocab.size(),
            ..tiny_config(true)
        };

        for kind in ALL_ARCHITECTURES {
            let mut net = build_network(kind, &config, 23).unwrap();
            // Give the running statistics a non-default value.
            let batch = tiny_batch(&config, 3, 2);
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            forward_batch(&mut net, &batch, Mode::Train, &mut rng).unwrap();

            let path = dir.path().join(format!("{kind}.checkpoint.json"));
            save_checkpoint(&path, &net, &vocab, &space).unwrap();
            let (loaded, loaded_vocab, loaded_space) = load_checkpoint(&path).unwrap();

            assert_eq!(loaded.kind, kind);
            assert_eq!(loaded.config, net.config);
            assert_eq!(loaded_vocab, vocab);
            assert_eq!(loaded_space, space);
            assert_eq!(loaded.batchnorm, net.batchnorm);
            for (name, p) in net.params.iter() {
                assert_eq!(p.value, *loaded.params.value(name), "{kind} {name}");
            }
            assert_eq!(
                infer_probs(&net, &batch).unwrap(),
                infer_probs(&loaded, &batch).unwrap()
            );
        }
    }

    #[test]
    fn tampered_checkpoints_are_refused() {
        let dir = tempfile::tempdir().unwrap();
        let space = build_label_space(&["a"]).unwrap();
        let reviews = vec![Review::new("x y", vec![0], &space).unwrap()];
        let vocab = fit_vocabulary(&reviews, None).unwrap();
        let config = ModelConfig {
            vocab_size: vocab.size(),
            n_labels: 2,
            ..tiny_config(true)
        };
        let net = build_network(ArchitectureKind::Cnn, &config, 1).unwrap();
        let path = dir.path().join("model.json");
        save_checkpoint(&path, &net, &vocab, &space).unwrap();

        let text = std::fs::read_to_string(&path).unwrap();
        // Corrupt one parameter value.
        let tampered = text.replacen("\"data\":[", "\"data\":[9.0,", 1);
        assert_ne!(text, tampered);
        std::fs::write(&path, &tampered).unwrap();
        match load_checkpoint(&path) {
            Err(Error::HashMismatch { .. }) | Err(Error::Checkpoint(_)) => {}
            other => panic!("tampered checkpoint accepted: {other:?}"),
        }

        // Unknown container format.
        let wrong = text.replace(CHECKPOINT_FORMAT, "aspectforge.checkpoint.v0");
        std::fs::write(&path, &wrong).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Checkpoint(_))));
    }
}

//! Resolved run configuration.
//!
//! Every knob can come from three places with the precedence
//! CLI flag > JSON config file > built-in default. The JSON file rejects
//! unknown keys so typos fail fast. A manifest written by an earlier run
//! is also accepted as a config file; its embedded resolved config is used.

use std::path::{Path, PathBuf};

use aspectforge::models::ArchitectureKind;
use aspectforge::{Error, Result};
use serde::{Deserialize, Serialize};

/// Every option of every command, fully resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: String,
    pub corpus: Option<PathBuf>,
    pub test_corpus: Option<PathBuf>,
    pub test_fraction: f64,
    pub arch: ArchSelection,
    pub seed: u64,
    pub out: PathBuf,
    pub cpt: bool,
    pub threshold: f64,
    pub cpt_margin: f64,
    pub k: usize,
    pub runs: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub dropout: f64,
    pub hidden: usize,
    pub embedding_dim: usize,
    pub maxlen: usize,
    pub kernel_size: usize,
    pub filters: usize,
    pub batchnorm: bool,
    pub max_words: Option<usize>,
    pub aspects: usize,
    pub examples: usize,
    pub vocab_size: usize,
    pub checkpoint: Option<PathBuf>,
    pub input: Option<PathBuf>,
    pub trials: usize,
    pub epsilon: f64,
}

/// The same fields as [`RunConfig`], all optional: one layer of the
/// precedence stack (either the parsed CLI flags or a config file).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigLayer {
    pub command: Option<String>,
    pub corpus: Option<PathBuf>,
    pub test_corpus: Option<PathBuf>,
    pub test_fraction: Option<f64>,
    pub arch: Option<ArchSelection>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub cpt: Option<bool>,
    pub threshold: Option<f64>,
    pub cpt_margin: Option<f64>,
    pub k: Option<usize>,
    pub runs: Option<usize>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub lr: Option<f64>,
    pub dropout: Option<f64>,
    pub hidden: Option<usize>,
    pub embedding_dim: Option<usize>,
    pub maxlen: Option<usize>,
    pub kernel_size: Option<usize>,
    pub filters: Option<usize>,
    pub batchnorm: Option<bool>,
    pub max_words: Option<usize>,
    pub aspects: Option<usize>,
    pub examples: Option<usize>,
    pub vocab_size: Option<usize>,
    pub checkpoint: Option<PathBuf>,
    pub input: Option<PathBuf>,
    pub trials: Option<usize>,
    pub epsilon: Option<f64>,
}

/// `--arch` accepts one architecture or `all`. Serialized as that same
/// string so configs and manifests round-trip.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ArchSelection {
    All,
    One(ArchitectureKind),
}

impl ArchSelection {
    pub fn kinds(&self) -> Vec<ArchitectureKind> {
        match self {
            ArchSelection::All => aspectforge::models::ALL_ARCHITECTURES.to_vec(),
            ArchSelection::One(kind) => vec![*kind],
        }
    }

    fn as_str(&self) -> &'static str {
        match self {
            ArchSelection::All => "all",
            ArchSelection::One(kind) => kind.name(),
        }
    }
}

impl Serialize for ArchSelection {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for ArchSelection {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl std::str::FromStr for ArchSelection {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("all") {
            return Ok(ArchSelection::All);
        }
        s.parse::<ArchitectureKind>()
            .map(ArchSelection::One)
            .map_err(|_| format!("unknown architecture {s:?}: expected cnn, lstm, bilstm, gru, or all"))
    }
}

/// `on`/`off` switches used by `--cpt` and `--batchnorm`.
pub fn parse_switch(s: &str) -> std::result::Result<bool, String> {
    match s {
        "on" => Ok(true),
        "off" => Ok(false),
        other => Err(format!("expected on or off, got {other:?}")),
    }
}

fn manifest_embedded_config(value: &serde_json::Value) -> Option<serde_json::Value> {
    let obj = value.as_object()?;
    if obj.get("tool").and_then(|t| t.as_str()) == Some("aspectforge") {
        return obj.get("config").cloned();
    }
    None
}

/// Reads a JSON config file (or a run manifest, whose resolved config is
/// extracted) into one precedence layer.
pub fn load_config_file(path: &Path) -> Result<ConfigLayer> {
    let raw = std::fs::read_to_string(path)
        .map_err(|e| Error::invalid(format!("cannot read config file {}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&raw)
        .map_err(|e| Error::invalid(format!("config file {} is not valid JSON: {e}", path.display())))?;
    let effective = manifest_embedded_config(&value).unwrap_or(value);
    serde_json::from_value(effective)
        .map_err(|e| Error::invalid(format!("config file {}: {e}", path.display())))
}

macro_rules! pick {
    ($cli:expr, $file:expr, $default:expr, $field:ident) => {
        $cli.$field
            .clone()
            .or_else(|| $file.$field.clone())
            .unwrap_or($default)
    };
}

/// Applies the precedence CLI > file > default.
pub fn resolve(command: &str, cli: &ConfigLayer, file: &ConfigLayer) -> Result<RunConfig> {
    let config = RunConfig {
        command: command.to_string(),
        corpus: cli.corpus.clone().or_else(|| file.corpus.clone()),
        test_corpus: cli.test_corpus.clone().or_else(|| file.test_corpus.clone()),
        test_fraction: pick!(cli, file, 0.2, test_fraction),
        arch: cli
            .arch
            .or(file.arch)
            .unwrap_or(ArchSelection::One(ArchitectureKind::Cnn)),
        seed: pick!(cli, file, 42, seed),
        out: pick!(cli, file, PathBuf::from("out"), out),
        cpt: pick!(cli, file, true, cpt),
        threshold: pick!(cli, file, 0.5, threshold),
        cpt_margin: pick!(cli, file, 0.0, cpt_margin),
        k: pick!(cli, file, 5, k),
        runs: pick!(cli, file, 5, runs),
        epochs: pick!(cli, file, 20, epochs),
        batch_size: pick!(cli, file, 50, batch_size),
        lr: pick!(cli, file, 1e-3, lr),
        dropout: pick!(cli, file, 0.5, dropout),
        hidden: pick!(cli, file, 200, hidden),
        embedding_dim: pick!(cli, file, 300, embedding_dim),
        maxlen: pick!(cli, file, 103, maxlen),
        kernel_size: pick!(cli, file, 3, kernel_size),
        filters: pick!(cli, file, 256, filters),
        batchnorm: pick!(cli, file, true, batchnorm),
        max_words: cli.max_words.or(file.max_words),
        aspects: pick!(cli, file, 4, aspects),
        examples: pick!(cli, file, 1000, examples),
        vocab_size: pick!(cli, file, 120, vocab_size),
        checkpoint: cli.checkpoint.clone().or_else(|| file.checkpoint.clone()),
        input: cli.input.clone().or_else(|| file.input.clone()),
        trials: pick!(cli, file, 20, trials),
        epsilon: pick!(cli, file, 1e-5, epsilon),
    };
    validate(&config)?;
    Ok(config)
}

fn validate(config: &RunConfig) -> Result<()> {
    if !(0.0 < config.test_fraction && config.test_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "test_fraction {} must lie strictly between 0 and 1",
            config.test_fraction
        )));
    }
    if config.runs == 0 {
        return Err(Error::invalid("runs must be at least 1"));
    }
    if config.epochs == 0 {
        return Err(Error::invalid("epochs must be at least 1"));
    }
    Ok(())
}

/// The corpus path, or a corpus-level error naming the flag.
pub fn required_corpus(config: &RunConfig) -> Result<&PathBuf> {
    config
        .corpus
        .as_ref()
        .ok_or_else(|| Error::corpus(0, "no corpus given; pass --corpus <path>"))
}

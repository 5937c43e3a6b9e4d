//! Thresholding, polarity-conflict resolution, and text-level prediction.
//!
//! A prediction conflicts when both polarities of one aspect clear the
//! decision threshold. Resolution is removal-only: the strictly larger
//! probability survives when its advantage is at least `cpt_margin`,
//! otherwise the aspect is dropped entirely. Applying the resolution to an
//! already-resolved set changes nothing.

use serde::{Deserialize, Serialize};

use crate::corpus::{encode_example, LabelSpace, Review, Vocabulary};
use crate::models::{infer_probs, Network};
use crate::nn::Matrix;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CptConfig {
    /// Probabilities at or above this value become predicted labels.
    pub decision_threshold: f64,
    /// Minimum advantage the larger polarity needs to win a conflict.
    pub cpt_margin: f64,
}

impl Default for CptConfig {
    fn default() -> Self {
        CptConfig {
            decision_threshold: 0.5,
            cpt_margin: 0.0,
        }
    }
}

fn check_threshold(tau: f64) -> Result<()> {
    if !tau.is_finite() || tau <= 0.0 || tau > 1.0 {
        return Err(Error::invalid(format!(
            "decision threshold {tau} must lie in (0, 1]"
        )));
    }
    Ok(())
}

/// Per-example sorted label sets: every column with probability `>= tau`.
pub fn binarize(probs: &Matrix, tau: f64) -> Result<Vec<Vec<usize>>> {
    check_threshold(tau)?;
    let mut sets = Vec::with_capacity(probs.rows());
    for e in 0..probs.rows() {
        let row = probs.row(e);
        if let Some(&bad) = row.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
            return Err(Error::invalid(format!(
                "probability {bad} in example {e} lies outside [0, 1]"
            )));
        }
        sets.push(
            row.iter()
                .enumerate()
                .filter(|(_, &p)| p >= tau)
                .map(|(j, _)| j)
                .collect(),
        );
    }
    Ok(sets)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CptOutcome {
    /// Conflict-free label sets, still sorted per example.
    pub sets: Vec<Vec<usize>>,
    /// How many conflicted aspects each example had.
    pub conflicts: Vec<usize>,
}

/// Resolves polarity conflicts in arbitrary sorted label sets.
///
/// Exposed separately from [`apply_cpt`] so that already-resolved sets can
/// be fed back through the same rule.
pub fn resolve_conflicts(
    probs: &Matrix,
    sets: &[Vec<usize>],
    margin: f64,
) -> Result<CptOutcome> {
    if !margin.is_finite() || margin < 0.0 {
        return Err(Error::invalid(format!(
            "conflict margin {margin} must be finite and >= 0"
        )));
    }
    if probs.cols() == 0 || probs.cols() % 2 != 0 {
        return Err(Error::shape(format!(
            "label space width {} is not a positive even number",
            probs.cols()
        )));
    }
    if sets.len() != probs.rows() {
        return Err(Error::shape(format!(
            "{} label sets for {} probability rows",
            sets.len(),
            probs.rows()
        )));
    }

    let mut resolved = Vec::with_capacity(sets.len());
    let mut conflicts = Vec::with_capacity(sets.len());
    for (e, row) in sets.iter().enumerate() {
        if row.windows(2).any(|w| w[0] >= w[1]) || row.last().is_some_and(|&l| l >= probs.cols()) {
            return Err(Error::invalid(format!(
                "label set for example {e} is not sorted, unique, and in range"
            )));
        }
        let mut kept = Vec::with_capacity(row.len());
        let mut n_conflicts = 0;
        let mut i = 0;
        while i < row.len() {
            let label = row[i];
            let paired = label % 2 == 0 && i + 1 < row.len() && row[i + 1] == label + 1;
            if paired {
                n_conflicts += 1;
                let p_pos = probs.get(e, label);
                let p_neg = probs.get(e, label + 1);
                if p_pos > p_neg && p_pos - p_neg >= margin {
                    kept.push(label);
                } else if p_neg > p_pos && p_neg - p_pos >= margin {
                    kept.push(label + 1);
                }
                i += 2;
            } else {
                kept.push(label);
                i += 1;
            }
        }
        resolved.push(kept);
        conflicts.push(n_conflicts);
    }
    Ok(CptOutcome {
        sets: resolved,
        conflicts,
    })
}

/// Conflict resolution for freshly binarized predictions. `raw` must be
/// exactly `binarize(probs, cpt.decision_threshold)`.
pub fn apply_cpt(probs: &Matrix, raw: &[Vec<usize>], cpt: &CptConfig) -> Result<CptOutcome> {
    let expected = binarize(probs, cpt.decision_threshold)?;
    if expected != raw {
        return Err(Error::invalid(
            "raw label sets do not match the probabilities at the configured threshold",
        ));
    }
    resolve_conflicts(probs, raw, cpt.cpt_margin)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedLabel {
    pub aspect: String,
    pub polarity: String,
    pub probability: f64,
}

/// One line of prediction output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub text: String,
    pub labels: Vec<PredictedLabel>,
    pub conflicts_resolved: usize,
}

/// Runs raw texts through the network and returns thresholded (and, when a
/// margin is given, conflict-resolved) label sets with their probabilities.
pub fn predict_texts(
    net: &Network,
    texts: &[String],
    vocab: &Vocabulary,
    space: &LabelSpace,
    threshold: f64,
    cpt_margin: Option<f64>,
) -> Result<Vec<Prediction>> {
    if texts.is_empty() {
        return Err(Error::invalid("no texts to predict"));
    }
    if space.n_labels() != net.config.n_labels {
        return Err(Error::shape(format!(
            "label space has {} labels, network expects {}",
            space.n_labels(),
            net.config.n_labels
        )));
    }

    let mut probs = Matrix::zeros(texts.len(), net.config.n_labels);
    let mut encoded = Vec::with_capacity(texts.len());
    for text in texts {
        let review = Review::new(text.clone(), Vec::new(), space)?;
        encoded.push(encode_example(&review, vocab, net.config.maxlen, space)?);
    }
    for (i, chunk) in encoded.chunks(512).enumerate() {
        let out = infer_probs(net, chunk)?;
        for b in 0..chunk.len() {
            probs.row_mut(i * 512 + b).copy_from_slice(out.row(b));
        }
    }

    let raw = binarize(&probs, threshold)?;
    let (sets, conflicts) = match cpt_margin {
        Some(margin) => {
            let cfg = CptConfig {
                decision_threshold: threshold,
                cpt_margin: margin,
            };
            let outcome = apply_cpt(&probs, &raw, &cfg)?;
            (outcome.sets, outcome.conflicts)
        }
        None => {
            let n = raw.len();
            (raw, vec![0; n])
        }
    };

    Ok(texts
        .iter()
        .zip(sets)
        .zip(conflicts)
        .enumerate()
        .map(|(e, ((text, set), n_conflicts))| {
            let labels = set
                .into_iter()
                .map(|idx| {
                    let (aspect, polarity) = space
                        .decode(idx)
                        .expect("binarize keeps labels within the space");
                    PredictedLabel {
                        aspect: aspect.to_string(),
                        polarity: polarity.as_str().to_string(),
                        probability: probs.get(e, idx),
                    }
                })
                .collect();
            Prediction {
                text: text.clone(),
                labels,
                conflicts_resolved: n_conflicts,
            }
        })
        .collect())
}

//! Corpus handling: label space, reviews, tokenization, vocabulary,
//! JSONL I/O, cross-validation folds, and synthetic data.

pub mod folds;
pub mod jsonl;
pub mod synth;
pub mod vocab;

pub use folds::{kfold_plan, FoldPlan};
pub use jsonl::{load_corpus, write_corpus, ConflictMode, LoadOptions, LoadedCorpus};
pub use synth::synthesize_corpus;
pub use vocab::{encode_example, fit_vocabulary, tokenize, EncodedExample, Vocabulary};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
}

impl Polarity {
    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::Positive => "positive",
            Polarity::Negative => "negative",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "positive" => Ok(Polarity::Positive),
            "negative" => Ok(Polarity::Negative),
            other => Err(Error::invalid(format!(
                "unknown polarity {other:?}, expected \"positive\" or \"negative\""
            ))),
        }
    }
}

/// The joint label set: each aspect category contributes one positive and
/// one negative label, interleaved as `2i` / `2i + 1`. With `n` aspects the
/// network's output width is `2n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSpace {
    aspects: Vec<String>,
}

pub fn build_label_space<S: AsRef<str>>(aspect_names: &[S]) -> Result<LabelSpace> {
    if aspect_names.is_empty() {
        return Err(Error::invalid("label space needs at least one aspect"));
    }
    let mut aspects = Vec::with_capacity(aspect_names.len());
    for name in aspect_names {
        let name = name.as_ref();
        if name.trim().is_empty() {
            return Err(Error::invalid("aspect names must not be empty or whitespace"));
        }
        if aspects.iter().any(|a| a == name) {
            return Err(Error::invalid(format!("duplicate aspect {name:?}")));
        }
        aspects.push(name.to_string());
    }
    Ok(LabelSpace { aspects })
}

impl LabelSpace {
    pub fn n_aspects(&self) -> usize {
        self.aspects.len()
    }

    /// Width of the joint label space (`2 * n_aspects`).
    pub fn n_labels(&self) -> usize {
        2 * self.aspects.len()
    }

    pub fn aspects(&self) -> &[String] {
        &self.aspects
    }

    pub fn aspect_index(&self, name: &str) -> Option<usize> {
        self.aspects.iter().position(|a| a == name)
    }

    pub fn label_index(&self, aspect: &str, polarity: Polarity) -> Option<usize> {
        self.aspect_index(aspect).map(|i| match polarity {
            Polarity::Positive => 2 * i,
            Polarity::Negative => 2 * i + 1,
        })
    }

    /// Aspect name and polarity of joint label `index`.
    pub fn decode(&self, index: usize) -> Option<(&str, Polarity)> {
        self.aspects.get(index / 2).map(|a| {
            let polarity = if index % 2 == 0 {
                Polarity::Positive
            } else {
                Polarity::Negative
            };
            (a.as_str(), polarity)
        })
    }

    /// Digest of the aspect list; changing names or their order changes it.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        for a in &self.aspects {
            hasher.update(a.as_bytes());
            hasher.update([0u8]);
        }
        hex(&hasher.finalize())
    }
}

/// A raw review with its gold joint-label set (sorted, duplicate-free).
#[derive(Debug, Clone, PartialEq)]
pub struct Review {
    pub text: String,
    gold: Vec<usize>,
}

impl Review {
    /// Validates indices against `space` and rejects reviews that carry
    /// both polarities of one aspect.
    pub fn new(text: impl Into<String>, mut gold: Vec<usize>, space: &LabelSpace) -> Result<Self> {
        gold.sort_unstable();
        gold.dedup();
        if let Some(&bad) = gold.iter().find(|&&l| l >= space.n_labels()) {
            return Err(Error::invalid(format!(
                "gold label {bad} outside label space of width {}",
                space.n_labels()
            )));
        }
        if let Some(aspect) = conflicted_aspect(&gold, space) {
            return Err(Error::invalid(format!(
                "review carries both polarities of aspect {aspect:?}"
            )));
        }
        Ok(Review {
            text: text.into(),
            gold,
        })
    }

    /// As [`Review::new`] but allows polarity conflicts (used when a loader
    /// is asked to tolerate them).
    pub fn new_unchecked_polarity(
        text: impl Into<String>,
        mut gold: Vec<usize>,
        space: &LabelSpace,
    ) -> Result<Self> {
        gold.sort_unstable();
        gold.dedup();
        if let Some(&bad) = gold.iter().find(|&&l| l >= space.n_labels()) {
            return Err(Error::invalid(format!(
                "gold label {bad} outside label space of width {}",
                space.n_labels()
            )));
        }
        Ok(Review {
            text: text.into(),
            gold,
        })
    }

    pub fn gold(&self) -> &[usize] {
        &self.gold
    }

    /// Multi-hot target vector of width `n_labels`.
    pub fn target(&self, n_labels: usize) -> Vec<f64> {
        let mut t = vec![0.0; n_labels];
        for &l in &self.gold {
            t[l] = 1.0;
        }
        t
    }
}

/// First aspect (if any) that appears with both polarities in `gold`.
pub fn conflicted_aspect<'a>(gold: &[usize], space: &'a LabelSpace) -> Option<&'a str> {
    for i in 0..space.n_aspects() {
        if gold.contains(&(2 * i)) && gold.contains(&(2 * i + 1)) {
            return Some(&space.aspects()[i]);
        }
    }
    None
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

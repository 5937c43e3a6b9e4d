//! Tokenization, vocabulary fitting, and integer encoding.
//!
//! Tokenization lowercases, replaces a fixed punctuation set (ASCII plus
//! the Arabic-script comma, semicolon, question mark, and guillemets) with
//! spaces, and splits on Unicode whitespace. Apostrophes are kept.
//!
//! Index 0 is padding and index 1 is the out-of-vocabulary token; real
//! words start at 2, ordered by descending corpus frequency with ties
//! broken by first occurrence.

use std::collections::HashMap;

use sha2::{Digest, Sha256};

use super::{hex, LabelSpace, Review};
use crate::{Error, Result};

pub const PAD_INDEX: usize = 0;
pub const OOV_INDEX: usize = 1;
pub const RESERVED_INDICES: usize = 2;

const PUNCTUATION: &str = "!\"#$%&()*+,-./:;<=>?@[\\]^_`{|}~\u{060C}\u{061B}\u{061F}\u{00AB}\u{00BB}";

pub fn tokenize(text: &str) -> Vec<String> {
    let lowered = text.to_lowercase();
    let cleaned: String = lowered
        .chars()
        .map(|c| if PUNCTUATION.contains(c) { ' ' } else { c })
        .collect();
    cleaned.split_whitespace().map(str::to_string).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    freqs: Vec<u64>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Total table size including the two reserved indices.
    pub fn size(&self) -> usize {
        self.words.len() + RESERVED_INDICES
    }

    /// Index of `word`, or [`OOV_INDEX`] when absent.
    pub fn lookup(&self, word: &str) -> usize {
        self.index.get(word).copied().unwrap_or(OOV_INDEX)
    }

    /// Word stored at `index`; the reserved indices have no word.
    pub fn word_for(&self, index: usize) -> Option<&str> {
        index
            .checked_sub(RESERVED_INDICES)
            .and_then(|i| self.words.get(i))
            .map(String::as_str)
    }

    /// Corpus frequency of the word at `index`.
    pub fn frequency_for(&self, index: usize) -> Option<u64> {
        index
            .checked_sub(RESERVED_INDICES)
            .and_then(|i| self.freqs.get(i))
            .copied()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn freqs(&self) -> &[u64] {
        &self.freqs
    }

    /// Reconstructs a vocabulary from its stored word list.
    pub fn from_parts(words: Vec<String>, freqs: Vec<u64>) -> Result<Self> {
        if words.len() != freqs.len() {
            return Err(Error::invalid("vocabulary word and frequency lists differ in length"));
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i + RESERVED_INDICES).is_some() {
                return Err(Error::invalid(format!("duplicate vocabulary word {w:?}")));
            }
        }
        Ok(Vocabulary { words, freqs, index })
    }

    /// Digest of the index mapping: the ordered word list.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        for w in &self.words {
            hasher.update(w.as_bytes());
            hasher.update([0u8]);
        }
        hex(&hasher.finalize())
    }
}

/// Builds the vocabulary over all tokens of `reviews`. With
/// `max_words = Some(m)`, only the `m - 2` most frequent words are kept so
/// the total table size is exactly `m`; `m` must leave room for the
/// reserved indices.
pub fn fit_vocabulary(reviews: &[Review], max_words: Option<usize>) -> Result<Vocabulary> {
    if let Some(m) = max_words {
        if m < RESERVED_INDICES + 1 {
            return Err(Error::invalid(format!(
                "max_words {m} leaves no room for real words after {RESERVED_INDICES} reserved indices"
            )));
        }
    }

    let mut counts: HashMap<String, (u64, usize)> = HashMap::new();
    let mut first_seen = 0usize;
    for review in reviews {
        for token in tokenize(&review.text) {
            let entry = counts.entry(token).or_insert_with(|| {
                let e = (0, first_seen);
                first_seen += 1;
                e
            });
            entry.0 += 1;
        }
    }

    let mut ordered: Vec<(String, u64, usize)> =
        counts.into_iter().map(|(w, (c, pos))| (w, c, pos)).collect();
    ordered.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
    if let Some(m) = max_words {
        ordered.truncate(m - RESERVED_INDICES);
    }

    let words: Vec<String> = ordered.iter().map(|(w, _, _)| w.clone()).collect();
    let freqs: Vec<u64> = ordered.iter().map(|(_, c, _)| *c).collect();
    Vocabulary::from_parts(words, freqs)
}

/// A review ready for the network: fixed-length token indices and a
/// multi-hot target.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedExample {
    pub tokens: Vec<usize>,
    pub target: Vec<f64>,
}

/// Encodes to exactly `maxlen` indices: unknown words map to the OOV
/// index, sequences longer than `maxlen` keep their last tokens, and
/// shorter ones are left-padded with zeros.
pub fn encode_example(
    review: &Review,
    vocab: &Vocabulary,
    maxlen: usize,
    space: &LabelSpace,
) -> Result<EncodedExample> {
    if maxlen == 0 {
        return Err(Error::invalid("maxlen must be at least 1"));
    }
    if let Some(&bad) = review.gold().iter().find(|&&l| l >= space.n_labels()) {
        return Err(Error::invalid(format!(
            "gold label {bad} outside label space of width {}",
            space.n_labels()
        )));
    }
    let ids: Vec<usize> = tokenize(&review.text)
        .iter()
        .map(|w| vocab.lookup(w))
        .collect();
    let kept = if ids.len() > maxlen {
        &ids[ids.len() - maxlen..]
    } else {
        &ids[..]
    };
    let mut tokens = vec![PAD_INDEX; maxlen - kept.len()];
    tokens.extend_from_slice(kept);
    Ok(EncodedExample {
        tokens,
        target: review.target(space.n_labels()),
    })
}

//! Corpus files: one JSON object per line.
//!
//! The first line declares the aspect list; every following line is a
//! review with its labels:
//!
//! ```text
//! {"aspects": ["food", "service"]}
//! {"text": "great food", "labels": [{"aspect": "food", "polarity": "positive"}]}
//! ```
//!
//! Errors carry 1-based line numbers.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{build_label_space, conflicted_aspect, LabelSpace, Polarity, Review};
use crate::{Error, Result};

/// What to do with a review that labels one aspect with both polarities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConflictMode {
    /// Reject the file.
    #[default]
    Strict,
    /// Keep the review and record a warning.
    Lenient,
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub conflict_mode: ConflictMode,
    /// Whether reviews with an empty label list are acceptable.
    pub allow_empty_gold: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            conflict_mode: ConflictMode::Strict,
            allow_empty_gold: true,
        }
    }
}

#[derive(Debug)]
pub struct LoadedCorpus {
    pub reviews: Vec<Review>,
    pub space: LabelSpace,
    pub warnings: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaderLine {
    aspects: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LabelLine {
    aspect: String,
    polarity: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReviewLine {
    text: String,
    labels: Vec<LabelLine>,
}

pub fn load_corpus(path: impl AsRef<Path>, options: &LoadOptions) -> Result<LoadedCorpus> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| {
        Error::corpus(0, format!("cannot open {}: {e}", path.display()))
    })?;
    let reader = BufReader::new(file);

    let mut space: Option<LabelSpace> = None;
    let mut reviews = Vec::new();
    let mut warnings = Vec::new();

    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            return Err(Error::corpus(line_no, "blank line"));
        }

        let Some(space) = space.as_ref() else {
            let header: HeaderLine = serde_json::from_str(&line)
                .map_err(|e| Error::corpus(line_no, format!("bad header: {e}")))?;
            space = Some(
                build_label_space(&header.aspects)
                    .map_err(|e| Error::corpus(line_no, e.to_string()))?,
            );
            continue;
        };

        let record: ReviewLine = serde_json::from_str(&line)
            .map_err(|e| Error::corpus(line_no, format!("bad review record: {e}")))?;
        if record.labels.is_empty() && !options.allow_empty_gold {
            return Err(Error::corpus(line_no, "review has no labels"));
        }

        let mut gold = Vec::with_capacity(record.labels.len());
        for label in &record.labels {
            let polarity = Polarity::parse(&label.polarity)
                .map_err(|e| Error::corpus(line_no, e.to_string()))?;
            let index = space.label_index(&label.aspect, polarity).ok_or_else(|| {
                Error::corpus(line_no, format!("unknown aspect {:?}", label.aspect))
            })?;
            gold.push(index);
        }

        gold.sort_unstable();
        gold.dedup();
        if let Some(aspect) = conflicted_aspect(&gold, space) {
            match options.conflict_mode {
                ConflictMode::Strict => {
                    return Err(Error::corpus(
                        line_no,
                        format!("aspect {aspect:?} labeled with both polarities"),
                    ));
                }
                ConflictMode::Lenient => {
                    warnings.push(format!(
                        "line {line_no}: aspect {aspect:?} labeled with both polarities"
                    ));
                    reviews.push(Review::new_unchecked_polarity(record.text, gold, space)?);
                    continue;
                }
            }
        }
        reviews.push(
            Review::new(record.text, gold, space)
                .map_err(|e| Error::corpus(line_no, e.to_string()))?,
        );
    }

    let space = space.ok_or_else(|| Error::corpus(0, "empty corpus file: missing header line"))?;
    Ok(LoadedCorpus {
        reviews,
        space,
        warnings,
    })
}

pub fn write_corpus(path: impl AsRef<Path>, reviews: &[Review], space: &LabelSpace) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    let header = serde_json::json!({ "aspects": space.aspects() });
    writeln!(w, "{header}")?;
    for review in reviews {
        let labels: Vec<LabelLine> = review
            .gold()
            .iter()
            .map(|&l| {
                let (aspect, polarity) = space
                    .decode(l)
                    .expect("gold label validated against the label space");
                LabelLine {
                    aspect: aspect.to_string(),
                    polarity: polarity.as_str().to_string(),
                }
            })
            .collect();
        let record = ReviewLine {
            text: review.text.clone(),
            labels,
        };
        writeln!(w, "{}", serde_json::to_string(&record)?)?;
    }
    w.flush()?;
    Ok(())
}

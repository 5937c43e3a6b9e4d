//! Synthetic review generator.
//!
//! Each review expresses one to three distinct aspects. An expressed aspect
//! plants two signal words in the text: the aspect's own keyword and a
//! keyword specific to the (aspect, polarity) pair, so the gold labels are
//! exactly recoverable from the words alone. Filler words carry no label
//! information. Word order is shuffled.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{build_label_space, LabelSpace, Polarity, Review};
use crate::{Error, Result};

/// Minimum distinct-word budget per aspect, plus a floor of filler words.
fn min_vocab(n_aspects: usize) -> usize {
    4 * n_aspects + 10
}

pub fn synthesize_corpus(
    n_aspects: usize,
    n_examples: usize,
    vocab_size: usize,
    seed: u64,
) -> Result<(Vec<Review>, LabelSpace)> {
    if n_aspects == 0 {
        return Err(Error::invalid("need at least one aspect"));
    }
    if n_examples == 0 {
        return Err(Error::invalid("need at least one example"));
    }
    if vocab_size < min_vocab(n_aspects) {
        return Err(Error::invalid(format!(
            "vocab_size {vocab_size} too small for {n_aspects} aspects, need at least {}",
            min_vocab(n_aspects)
        )));
    }

    let aspect_names: Vec<String> = (0..n_aspects).map(|i| format!("asp{i}")).collect();
    let space = build_label_space(&aspect_names)?;
    // 3 signal words per aspect (name, positive keyword, negative keyword);
    // the rest of the budget becomes filler, minus the two reserved
    // indices a fitted vocabulary will add.
    let n_filler = vocab_size - 3 * n_aspects - 2;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reviews = Vec::with_capacity(n_examples);
    for _ in 0..n_examples {
        let n_expressed = rng.random_range(1..=3usize.min(n_aspects));
        let mut candidates: Vec<usize> = (0..n_aspects).collect();
        candidates.shuffle(&mut rng);
        candidates.truncate(n_expressed);

        let mut words = Vec::new();
        let mut gold = Vec::new();
        for &aspect in &candidates {
            let polarity = if rng.random_bool(0.5) {
                Polarity::Positive
            } else {
                Polarity::Negative
            };
            words.push(format!("asp{aspect}"));
            words.push(match polarity {
                Polarity::Positive => format!("pos{aspect}"),
                Polarity::Negative => format!("neg{aspect}"),
            });
            gold.push(space.label_index(&aspect_names[aspect], polarity).unwrap());
        }
        for _ in 0..rng.random_range(2..=5usize) {
            words.push(format!("w{}", rng.random_range(0..n_filler)));
        }
        words.shuffle(&mut rng);
        reviews.push(Review::new(words.join(" "), gold, &space)?);
    }
    Ok((reviews, space))
}

/// Recovers the gold label set of a synthetic review from its words alone.
pub fn decode_synthetic_labels(text: &str, space: &LabelSpace) -> Vec<usize> {
    let words: Vec<&str> = text.split_whitespace().collect();
    let mut gold = Vec::new();
    for (i, name) in space.aspects().iter().enumerate() {
        if words.contains(&name.as_str()) {
            if words.contains(&format!("pos{i}").as_str()) {
                gold.push(2 * i);
            }
            if words.contains(&format!("neg{i}").as_str()) {
                gold.push(2 * i + 1);
            }
        }
    }
    gold.sort_unstable();
    gold
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{conflicted_aspect, fit_vocabulary};

    #[test]
    fn generation_is_seed_deterministic() {
        let (a, _) = synthesize_corpus(4, 50, 60, 7).unwrap();
        let (b, _) = synthesize_corpus(4, 50, 60, 7).unwrap();
        let (c, _) = synthesize_corpus(4, 50, 60, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn labels_are_recoverable_from_the_text() {
        let (reviews, space) = synthesize_corpus(5, 200, 100, 3).unwrap();
        for r in &reviews {
            assert_eq!(decode_synthetic_labels(&r.text, &space), r.gold());
        }
    }

    #[test]
    fn each_review_expresses_one_to_three_aspects_without_conflicts() {
        let (reviews, space) = synthesize_corpus(6, 300, 54, 11).unwrap();
        for r in &reviews {
            let n_aspects_expressed = r
                .gold()
                .iter()
                .map(|l| l / 2)
                .collect::<std::collections::HashSet<_>>()
                .len();
            assert!((1..=3).contains(&n_aspects_expressed));
            assert_eq!(n_aspects_expressed, r.gold().len());
            assert!(conflicted_aspect(r.gold(), &space).is_none());
        }
    }

    #[test]
    fn single_aspect_corpora_are_supported() {
        let (reviews, space) = synthesize_corpus(1, 40, 15, 2).unwrap();
        assert_eq!(space.n_labels(), 2);
        for r in &reviews {
            assert_eq!(r.gold().len(), 1);
        }
    }

    #[test]
    fn joint_labels_are_roughly_balanced() {
        let (reviews, space) = synthesize_corpus(4, 800, 60, 13).unwrap();
        let mut counts = vec![0usize; space.n_labels()];
        for r in &reviews {
            for &l in r.gold() {
                counts[l] += 1;
            }
        }
        let min = *counts.iter().min().unwrap();
        let max = *counts.iter().max().unwrap();
        assert!(min > 0, "some joint label never appears: {counts:?}");
        assert!(max < 3 * min, "label counts too skewed: {counts:?}");
    }

    #[test]
    fn fitted_vocabulary_stays_within_budget() {
        let (reviews, _) = synthesize_corpus(4, 500, 60, 5).unwrap();
        let vocab = fit_vocabulary(&reviews, None).unwrap();
        assert!(vocab.size() <= 60, "vocabulary {} exceeds budget", vocab.size());
        // Most of the budget is actually exercised over 500 reviews.
        assert!(vocab.size() > 40, "vocabulary {} surprisingly small", vocab.size());
    }

    #[test]
    fn undersized_vocab_budget_is_rejected() {
        assert!(synthesize_corpus(4, 10, 25, 0).is_err());
        assert!(synthesize_corpus(4, 10, 26, 0).is_ok());
        assert!(synthesize_corpus(0, 10, 50, 0).is_err());
        assert!(synthesize_corpus(4, 0, 50, 0).is_err());
    }
}

//! Joint aspect-category and polarity detection for short reviews.
//!
//! A review is mapped to a set of joint labels, one per (aspect, polarity)
//! pair, so category detection and polarity classification are solved
//! together as a single multi-label problem. The crate provides four
//! sequence encoders (convolutional, LSTM, bidirectional LSTM, GRU) with
//! hand-written backpropagation, a Nadam trainer, probability-threshold
//! decoding with conflict resolution, and the usual example-based and
//! label-based multi-label metrics.
//!
//! Everything is seeded: the same corpus, configuration, and seed produce
//! bit-identical parameters, training history, and reports.

pub mod corpus;
pub mod error;
pub mod inference;
pub mod metrics;
pub mod models;
pub mod nn;
pub mod training;
pub mod verify;

pub use error::{Error, Result};

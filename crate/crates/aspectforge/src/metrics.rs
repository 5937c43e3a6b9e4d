//! Multi-label evaluation metrics.
//!
//! Example-based metrics average a per-example score over the evaluation
//! set; label-based metrics first build one confusion matrix per label and
//! then combine them either macro (average the per-label scores) or micro
//! (score the summed counts). Conventions for empty sets and empty
//! denominators:
//!
//! * subset accuracy: exact set equality;
//! * per-example accuracy/precision/recall: an example with empty
//!   prediction and empty gold counts as 1; an empty prediction against a
//!   non-empty gold contributes 0 to precision, and the mirror case
//!   contributes 0 to recall;
//! * per-label precision, recall, and F with an empty denominator are 0;
//!   label accuracy (TP+TN)/n is always defined.
//!
//! F-scores use the beta-weighted harmonic mean; the example-based F is
//! computed from the aggregate example-based precision and recall.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One evaluated example: predicted and gold joint-label sets, stored
/// sorted and duplicate-free.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalPair {
    predicted: Vec<usize>,
    gold: Vec<usize>,
}

impl EvalPair {
    pub fn new(mut predicted: Vec<usize>, mut gold: Vec<usize>) -> Self {
        predicted.sort_unstable();
        predicted.dedup();
        gold.sort_unstable();
        gold.dedup();
        EvalPair { predicted, gold }
    }

    pub fn predicted(&self) -> &[usize] {
        &self.predicted
    }

    pub fn gold(&self) -> &[usize] {
        &self.gold
    }
}

fn intersection_size(a: &[usize], b: &[usize]) -> usize {
    let mut i = 0;
    let mut j = 0;
    let mut n = 0;
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

fn check_pairs(pairs: &[EvalPair], n_labels: usize) -> Result<()> {
    if pairs.is_empty() {
        return Err(Error::invalid("metrics over an empty evaluation set"));
    }
    if n_labels == 0 {
        return Err(Error::invalid("metrics need a non-empty label space"));
    }
    for (i, p) in pairs.iter().enumerate() {
        for &l in p.predicted.iter().chain(&p.gold) {
            if l >= n_labels {
                return Err(Error::invalid(format!(
                    "example {i} uses label {l}, outside space of width {n_labels}"
                )));
            }
        }
    }
    Ok(())
}

/// Beta-weighted harmonic mean of precision and recall; 0 when empty.
fn f_beta(precision: f64, recall: f64, beta: f64) -> f64 {
    let b2 = beta * beta;
    let denom = b2 * precision + recall;
    if denom == 0.0 {
        0.0
    } else {
        (1.0 + b2) * precision * recall / denom
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExampleMetrics {
    pub subset_accuracy: f64,
    pub hamming_loss: f64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f: f64,
}

/// Example-based metrics over the whole evaluation set.
pub fn example_based(pairs: &[EvalPair], n_labels: usize, beta: f64) -> Result<ExampleMetrics> {
    check_pairs(pairs, n_labels)?;
    if beta.is_nan() || beta <= 0.0 {
        return Err(Error::invalid(format!("beta must be positive, got {beta}")));
    }
    let n = pairs.len() as f64;

    let mut exact = 0usize;
    let mut sym_diff = 0usize;
    let mut acc_sum = 0.0;
    let mut prec_sum = 0.0;
    let mut rec_sum = 0.0;
    for p in pairs {
        let inter = intersection_size(&p.predicted, &p.gold);
        let union = p.predicted.len() + p.gold.len() - inter;
        if p.predicted == p.gold {
            exact += 1;
        }
        sym_diff += union - inter;
        if union == 0 {
            // Empty prediction, empty gold: a perfect example.
            acc_sum += 1.0;
            prec_sum += 1.0;
            rec_sum += 1.0;
        } else {
            acc_sum += inter as f64 / union as f64;
            if !p.predicted.is_empty() {
                prec_sum += inter as f64 / p.predicted.len() as f64;
            }
            if !p.gold.is_empty() {
                rec_sum += inter as f64 / p.gold.len() as f64;
            }
        }
    }

    let precision = prec_sum / n;
    let recall = rec_sum / n;
    Ok(ExampleMetrics {
        subset_accuracy: exact as f64 / n,
        hamming_loss: sym_diff as f64 / (n * n_labels as f64),
        accuracy: acc_sum / n,
        precision,
        recall,
        f: f_beta(precision, recall, beta),
    })
}

/// Per-label confusion counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LabelCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl LabelCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Builds one confusion matrix per label.
pub fn label_confusion(pairs: &[EvalPair], n_labels: usize) -> Result<Vec<LabelCounts>> {
    check_pairs(pairs, n_labels)?;
    let mut counts = vec![LabelCounts::default(); n_labels];
    let mut in_pred = vec![false; n_labels];
    let mut in_gold = vec![false; n_labels];
    for p in pairs {
        in_pred.fill(false);
        in_gold.fill(false);
        for &l in &p.predicted {
            in_pred[l] = true;
        }
        for &l in &p.gold {
            in_gold[l] = true;
        }
        for (j, c) in counts.iter_mut().enumerate() {
            match (in_pred[j], in_gold[j]) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
    }
    Ok(counts)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelMetrics {
    pub macro_accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f: f64,
    pub micro_accuracy: f64,
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub micro_f: f64,
}

fn counts_accuracy(c: &LabelCounts) -> f64 {
    (c.tp + c.tn) as f64 / c.total() as f64
}

fn counts_precision(c: &LabelCounts) -> f64 {
    let d = c.tp + c.fp;
    if d == 0 {
        0.0
    } else {
        c.tp as f64 / d as f64
    }
}

fn counts_recall(c: &LabelCounts) -> f64 {
    let d = c.tp + c.fn_;
    if d == 0 {
        0.0
    } else {
        c.tp as f64 / d as f64
    }
}

/// F directly from counts: `(1+b^2)TP / ((1+b^2)TP + b^2 FN + FP)`.
fn counts_f(c: &LabelCounts, beta: f64) -> f64 {
    let b2 = beta * beta;
    let denom = (1.0 + b2) * c.tp as f64 + b2 * c.fn_ as f64 + c.fp as f64;
    if denom == 0.0 {
        0.0
    } else {
        (1.0 + b2) * c.tp as f64 / denom
    }
}

/// Macro and micro metrics from per-label confusion counts. All labels
/// must cover the same number of examples.
pub fn label_based(counts: &[LabelCounts], beta: f64) -> Result<LabelMetrics> {
    if counts.is_empty() {
        return Err(Error::invalid("label metrics over an empty label set"));
    }
    if beta.is_nan() || beta <= 0.0 {
        return Err(Error::invalid(format!("beta must be positive, got {beta}")));
    }
    let n = counts[0].total();
    if n == 0 {
        return Err(Error::invalid("label confusion counts cover zero examples"));
    }
    if counts.iter().any(|c| c.total() != n) {
        return Err(Error::invalid("inconsistent confusion counts: row sums differ"));
    }

    let q = counts.len() as f64;
    let mut sum = LabelCounts::default();
    let mut macro_acc = 0.0;
    let mut macro_prec = 0.0;
    let mut macro_rec = 0.0;
    let mut macro_f = 0.0;
    for c in counts {
        macro_acc += counts_accuracy(c);
        macro_prec += counts_precision(c);
        macro_rec += counts_recall(c);
        macro_f += counts_f(c, beta);
        sum.tp += c.tp;
        sum.fp += c.fp;
        sum.tn += c.tn;
        sum.fn_ += c.fn_;
    }

    Ok(LabelMetrics {
        macro_accuracy: macro_acc / q,
        macro_precision: macro_prec / q,
        macro_recall: macro_rec / q,
        macro_f: macro_f / q,
        micro_accuracy: counts_accuracy(&sum),
        micro_precision: counts_precision(&sum),
        micro_recall: counts_recall(&sum),
        micro_f: counts_f(&sum, beta),
    })
}

/// Complete evaluation report for one model run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub subset_acc: f64,
    pub hamm_loss: f64,
    pub acc: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub macro_acc: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub micro_acc: f64,
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub micro_f1: f64,
    pub beta: f64,
    pub cpt: bool,
    pub n_examples: usize,
    pub n_labels: usize,
}

pub const METRIC_FIELDS: [&str; 14] = [
    "subset_acc",
    "hamm_loss",
    "acc",
    "precision",
    "recall",
    "f1",
    "macro_acc",
    "macro_precision",
    "macro_recall",
    "macro_f1",
    "micro_acc",
    "micro_precision",
    "micro_recall",
    "micro_f1",
];

impl MetricsReport {
    /// The 14 metric values, in [`METRIC_FIELDS`] order.
    pub fn values(&self) -> [f64; 14] {
        [
            self.subset_acc,
            self.hamm_loss,
            self.acc,
            self.precision,
            self.recall,
            self.f1,
            self.macro_acc,
            self.macro_precision,
            self.macro_recall,
            self.macro_f1,
            self.micro_acc,
            self.micro_precision,
            self.micro_recall,
            self.micro_f1,
        ]
    }
}

/// Computes every metric for one evaluated run.
pub fn compute_report(
    pairs: &[EvalPair],
    n_labels: usize,
    beta: f64,
    cpt: bool,
) -> Result<MetricsReport> {
    let ex = example_based(pairs, n_labels, beta)?;
    let counts = label_confusion(pairs, n_labels)?;
    let lb = label_based(&counts, beta)?;
    Ok(MetricsReport {
        subset_acc: ex.subset_accuracy,
        hamm_loss: ex.hamming_loss,
        acc: ex.accuracy,
        precision: ex.precision,
        recall: ex.recall,
        f1: ex.f,
        macro_acc: lb.macro_accuracy,
        macro_precision: lb.macro_precision,
        macro_recall: lb.macro_recall,
        macro_f1: lb.macro_f,
        micro_acc: lb.micro_accuracy,
        micro_precision: lb.micro_precision,
        micro_recall: lb.micro_recall,
        micro_f1: lb.micro_f,
        beta,
        cpt,
        n_examples: pairs.len(),
        n_labels,
    })
}

/// Mean and sample standard deviation of each metric over repeated runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatedReport {
    pub n_runs: usize,
    pub mean: MetricsReport,
    /// Sample standard deviation per metric, in [`METRIC_FIELDS`] order;
    /// zero when there is a single run.
    pub std_dev: Vec<f64>,
}

/// Averages reports from repeated runs of one configuration. The runs must
/// agree on beta, label-space width, and CPT usage.
pub fn aggregate_runs(reports: &[MetricsReport]) -> Result<AggregatedReport> {
    let Some(first) = reports.first() else {
        return Err(Error::invalid("no reports to aggregate"));
    };
    for r in reports {
        if r.beta != first.beta || r.n_labels != first.n_labels || r.cpt != first.cpt {
            return Err(Error::invalid(
                "cannot aggregate reports with different beta, label space, or CPT setting",
            ));
        }
    }

    let n = reports.len() as f64;
    let mut means = [0.0; 14];
    for r in reports {
        for (m, v) in means.iter_mut().zip(r.values()) {
            *m += v;
        }
    }
    for m in &mut means {
        *m /= n;
    }

    let mut std_dev = vec![0.0; 14];
    if reports.len() > 1 {
        for r in reports {
            for (s, (m, v)) in std_dev.iter_mut().zip(means.iter().zip(r.values())) {
                *s += (v - m) * (v - m);
            }
        }
        for s in &mut std_dev {
            *s = (*s / (n - 1.0)).sqrt();
        }
    }

    let mean_examples =
        (reports.iter().map(|r| r.n_examples).sum::<usize>() as f64 / n).round() as usize;
    Ok(AggregatedReport {
        n_runs: reports.len(),
        mean: MetricsReport {
            subset_acc: means[0],
            hamm_loss: means[1],
            acc: means[2],
            precision: means[3],
            recall: means[4],
            f1: means[5],
            macro_acc: means[6],
            macro_precision: means[7],
            macro_recall: means[8],
            macro_f1: means[9],
            micro_acc: means[10],
            micro_precision: means[11],
            micro_recall: means[12],
            micro_f1: means[13],
            beta: first.beta,
            cpt: first.cpt,
            n_examples: mean_examples,
            n_labels: first.n_labels,
        },
        std_dev,
    })
}

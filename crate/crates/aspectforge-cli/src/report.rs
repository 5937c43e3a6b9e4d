//! Report emission: a byte-stable JSON form and aligned text tables.
//!
//! The JSON renderer sorts every object key and prints floats with five
//! significant digits (`{:.4e}`), so identical inputs always produce
//! identical bytes and parsed values match the originals to five
//! significant digits. Text tables show one row per (model, CPT setting):
//! an example-based table and a macro/micro label-based table. Percentages
//! are scaled by 100 with two decimals; Hamming loss keeps five decimals.

use std::collections::BTreeMap;

use aspectforge::metrics::{AggregatedReport, MetricsReport, METRIC_FIELDS};
use aspectforge::{Error, Result};

/// JSON value with deterministic rendering.
#[derive(Debug, Clone)]
pub enum Stable {
    Bool(bool),
    UInt(u64),
    Float(f64),
    Str(String),
    Arr(Vec<Stable>),
    Obj(BTreeMap<String, Stable>),
}

impl Stable {
    pub fn obj(entries: impl IntoIterator<Item = (&'static str, Stable)>) -> Stable {
        Stable::Obj(
            entries
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
        )
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        self.write(&mut out);
        out
    }

    fn write(&self, out: &mut String) {
        match self {
            Stable::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
            Stable::UInt(u) => out.push_str(&u.to_string()),
            Stable::Float(v) => out.push_str(&format!("{v:.4e}")),
            Stable::Str(s) => {
                out.push_str(&serde_json::to_string(s).expect("strings always serialize"))
            }
            Stable::Arr(items) => {
                out.push('[');
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    item.write(out);
                }
                out.push(']');
            }
            Stable::Obj(map) => {
                out.push('{');
                for (i, (key, value)) in map.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    out.push_str(&serde_json::to_string(key).expect("keys always serialize"));
                    out.push(':');
                    value.write(out);
                }
                out.push('}');
            }
        }
    }
}

pub fn report_value(report: &MetricsReport) -> Stable {
    let mut map: BTreeMap<String, Stable> = METRIC_FIELDS
        .iter()
        .zip(report.values())
        .map(|(name, v)| (name.to_string(), Stable::Float(v)))
        .collect();
    map.insert("beta".into(), Stable::Float(report.beta));
    map.insert("cpt".into(), Stable::Bool(report.cpt));
    map.insert("n_examples".into(), Stable::UInt(report.n_examples as u64));
    map.insert("n_labels".into(), Stable::UInt(report.n_labels as u64));
    Stable::Obj(map)
}

fn aggregate_value(agg: &AggregatedReport) -> Stable {
    let std_dev: BTreeMap<String, Stable> = METRIC_FIELDS
        .iter()
        .zip(&agg.std_dev)
        .map(|(name, v)| (name.to_string(), Stable::Float(*v)))
        .collect();
    Stable::obj([
        ("mean", report_value(&agg.mean)),
        ("n_runs", Stable::UInt(agg.n_runs as u64)),
        ("std_dev", Stable::Obj(std_dev)),
    ])
}

/// One scored repetition (a run, or a fold of a run).
pub struct RunRow {
    pub arch: String,
    pub cpt: bool,
    pub run: usize,
    pub fold: Option<usize>,
    pub seed: u64,
    pub report: MetricsReport,
}

/// Aggregate over all repetitions of one (architecture, CPT) cell.
pub struct AggRow {
    pub arch: String,
    pub cpt: bool,
    pub aggregate: AggregatedReport,
}

/// The full report document in stable JSON.
pub fn render_report_json(runs: &[RunRow], aggregates: &[AggRow]) -> String {
    let runs: Vec<Stable> = runs
        .iter()
        .map(|r| {
            let mut map = BTreeMap::new();
            map.insert("arch".to_string(), Stable::Str(r.arch.clone()));
            map.insert("cpt".to_string(), Stable::Bool(r.cpt));
            map.insert("run".to_string(), Stable::UInt(r.run as u64));
            if let Some(fold) = r.fold {
                map.insert("fold".to_string(), Stable::UInt(fold as u64));
            }
            map.insert("seed".to_string(), Stable::UInt(r.seed));
            map.insert("report".to_string(), report_value(&r.report));
            Stable::Obj(map)
        })
        .collect();
    let aggregates: Vec<Stable> = aggregates
        .iter()
        .map(|a| {
            Stable::obj([
                ("arch", Stable::Str(a.arch.clone())),
                ("cpt", Stable::Bool(a.cpt)),
                ("aggregate", aggregate_value(&a.aggregate)),
            ])
        })
        .collect();
    Stable::obj([
        ("aggregates", Stable::Arr(aggregates)),
        ("runs", Stable::Arr(runs)),
    ])
    .render()
        + "\n"
}

fn pct(v: f64) -> String {
    format!("{:.2}", v * 100.0)
}

fn hamming(v: f64) -> String {
    format!("{v:.5}")
}

fn cpt_label(cpt: bool) -> &'static str {
    if cpt {
        "With CPT"
    } else {
        "Without CPT"
    }
}

fn layout(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let mut push_row = |cells: &[String]| {
        for (i, (cell, w)) in cells.iter().zip(&widths).enumerate() {
            if i > 0 {
                out.push_str("  ");
            }
            if i < 2 {
                out.push_str(&format!("{cell:<w$}"));
            } else {
                out.push_str(&format!("{cell:>w$}"));
            }
        }
        while out.ends_with(' ') {
            out.pop();
        }
        out.push('\n');
    };
    push_row(&header.iter().map(|h| h.to_string()).collect::<Vec<_>>());
    for row in rows {
        push_row(row);
    }
    out
}

/// Renders the example-based and label-based tables, one row per
/// (model, CPT) pair, in the order given.
pub fn render_tables(rows: &[(String, bool, MetricsReport)]) -> Result<String> {
    let Some((_, _, first)) = rows.first() else {
        return Err(Error::invalid("no reports to render"));
    };
    if rows.iter().any(|(_, _, r)| r.beta != first.beta) {
        return Err(Error::invalid("cannot render reports with mixed beta values"));
    }

    let example_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|(arch, cpt, r)| {
            vec![
                arch.clone(),
                cpt_label(*cpt).to_string(),
                pct(r.subset_acc),
                hamming(r.hamm_loss),
                pct(r.acc),
                pct(r.precision),
                pct(r.recall),
                pct(r.f1),
            ]
        })
        .collect();
    let label_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|(arch, cpt, r)| {
            vec![
                arch.clone(),
                cpt_label(*cpt).to_string(),
                pct(r.macro_acc),
                pct(r.micro_acc),
                pct(r.macro_precision),
                pct(r.micro_precision),
                pct(r.macro_recall),
                pct(r.micro_recall),
                pct(r.macro_f1),
                pct(r.micro_f1),
            ]
        })
        .collect();

    let mut out = String::from("Example-based metrics\n");
    out.push_str(&layout(
        &[
            "Model",
            "CPT",
            "Subset acc",
            "Hamm. loss",
            "Acc.",
            "Precision",
            "Recall",
            "F1",
        ],
        &example_rows,
    ));
    out.push_str("\nLabel-based metrics (macro/micro)\n");
    out.push_str(&layout(
        &[
            "Model",
            "CPT",
            "Acc. ma",
            "Acc. mi",
            "Prec. ma",
            "Prec. mi",
            "Rec. ma",
            "Rec. mi",
            "F1 ma",
            "F1 mi",
        ],
        &label_rows,
    ));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use aspectforge::metrics::{aggregate_runs, compute_report, EvalPair};

    fn sample_report(cpt: bool) -> MetricsReport {
        let pairs = vec![
            EvalPair::new(vec![0], vec![0]),
            EvalPair::new(vec![0, 1], vec![1]),
        ];
        compute_report(&pairs, 4, 1.0, cpt).unwrap()
    }

    #[test]
    fn json_is_byte_stable_and_sorted() {
        let runs = vec![RunRow {
            arch: "cnn".into(),
            cpt: true,
            run: 0,
            fold: Some(2),
            seed: 43,
            report: sample_report(true),
        }];
        let aggregates = vec![AggRow {
            arch: "cnn".into(),
            cpt: true,
            aggregate: aggregate_runs(&[sample_report(true), sample_report(true)]).unwrap(),
        }];
        let a = render_report_json(&runs, &aggregates);
        let b = render_report_json(&runs, &aggregates);
        assert_eq!(a, b);

        let acc = a.find("\"acc\"").unwrap();
        let beta = a.find("\"beta\"").unwrap();
        let subset = a.find("\"subset_acc\"").unwrap();
        assert!(acc < beta && beta < subset);
        assert!(a.contains("\"fold\":2"));
        serde_json::from_str::<serde_json::Value>(&a).unwrap();
    }

    #[test]
    fn rendered_floats_round_trip_to_five_significant_digits() {
        let report = sample_report(false);
        let json = render_report_json(
            &[RunRow {
                arch: "gru".into(),
                cpt: false,
                run: 1,
                fold: None,
                seed: 44,
                report: report.clone(),
            }],
            &[],
        );
        let value: serde_json::Value = serde_json::from_str(&json).unwrap();
        let rendered = &value["runs"][0]["report"];
        for (name, expected) in METRIC_FIELDS.iter().zip(report.values()) {
            let parsed = rendered[name].as_f64().unwrap();
            assert_eq!(
                format!("{parsed:.4e}"),
                format!("{expected:.4e}"),
                "field {name}"
            );
        }
    }

    #[test]
    fn tables_scale_and_label_rows() {
        let rows = vec![
            ("cnn".to_string(), true, sample_report(true)),
            ("cnn".to_string(), false, sample_report(false)),
        ];
        let text = render_tables(&rows).unwrap();
        assert!(text.contains("With CPT"));
        assert!(text.contains("Without CPT"));
        // subset accuracy 0.5 prints as a percentage, Hamming with 5 decimals
        assert!(text.contains("50.00"));
        assert!(text.contains("0.12500"));
        assert!(text.starts_with("Example-based metrics\n"));
        assert!(text.contains("Label-based metrics"));
    }

    #[test]
    fn empty_or_mixed_beta_rows_are_rejected() {
        assert!(render_tables(&[]).is_err());
        let pairs = vec![EvalPair::new(vec![0], vec![0])];
        let half = compute_report(&pairs, 4, 0.5, true).unwrap();
        let rows = vec![
            ("cnn".to_string(), true, sample_report(true)),
            ("cnn".to_string(), false, half),
        ];
        assert!(render_tables(&rows).is_err());
    }
}

//! Implementations of the six subcommands.

use std::path::Path;

use aspectforge::corpus::{
    encode_example, fit_vocabulary, kfold_plan, load_corpus, synthesize_corpus, write_corpus,
    EncodedExample, LabelSpace, LoadOptions, Review, Vocabulary,
};
use aspectforge::inference::predict_texts;
use aspectforge::metrics::{aggregate_runs, MetricsReport};
use aspectforge::models::{
    build_network, load_checkpoint, save_checkpoint, ArchitectureKind, ModelConfig, Network,
};
use aspectforge::training::{evaluate_model, train_model, TrainConfig};
use aspectforge::verify::{full_gradient_suite, CHECK_TOLERANCE};
use aspectforge::{Error, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{required_corpus, RunConfig};
use crate::manifest::ManifestWriter;
use crate::parallel::run_parallel;
use crate::report::{render_report_json, render_tables, AggRow, RunRow, Stable};

fn model_config(config: &RunConfig, vocab_size: usize, n_labels: usize) -> ModelConfig {
    ModelConfig {
        vocab_size,
        n_labels,
        embedding_dim: config.embedding_dim,
        maxlen: config.maxlen,
        hidden_units: config.hidden,
        conv_filters: config.filters,
        kernel_size: config.kernel_size,
        dropout_rate: config.dropout,
        batchnorm: config.batchnorm,
    }
}

fn train_config(config: &RunConfig, shuffle_seed: u64, log_epochs: bool) -> TrainConfig {
    TrainConfig {
        epochs: config.epochs,
        batch_size: config.batch_size,
        learning_rate: config.lr,
        shuffle_seed,
        log_epochs,
    }
}

fn encode_all(
    reviews: &[Review],
    vocab: &Vocabulary,
    maxlen: usize,
    space: &LabelSpace,
) -> Result<Vec<EncodedExample>> {
    reviews
        .iter()
        .map(|r| encode_example(r, vocab, maxlen, space))
        .collect()
}

fn load_strict(path: &Path) -> Result<(Vec<Review>, LabelSpace)> {
    let loaded = load_corpus(path, &LoadOptions::default())?;
    for w in &loaded.warnings {
        eprintln!("warning: {w}");
    }
    Ok((loaded.reviews, loaded.space))
}

/// Seeded holdout split: shuffled indices, first `round(fraction * n)`
/// (clamped so both sides are non-empty) become the test set. Both sides
/// are returned ascending.
pub fn holdout_split(n: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 2 {
        return Err(Error::invalid(format!(
            "cannot hold out a test set from {n} example(s)"
        )));
    }
    let mut indices: Vec<usize> = (0..n).collect();
    indices.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = ((fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut test = indices[..n_test].to_vec();
    let mut train = indices[n_test..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

fn select(reviews: &[Review], indices: &[usize]) -> Vec<Review> {
    indices.iter().map(|&i| reviews[i].clone()).collect()
}

pub fn synthesize(config: &RunConfig) -> Result<()> {
    let (reviews, space) =
        synthesize_corpus(config.aspects, config.examples, config.vocab_size, config.seed)?;
    let mut writer = ManifestWriter::begin(config, vec![config.seed])?;
    let path = writer.artifact("corpus.jsonl");
    write_corpus(&path, &reviews, &space)?;
    writer.finish()?;
    println!(
        "wrote {} reviews over {} aspects to {}",
        reviews.len(),
        config.aspects,
        path.display()
    );
    Ok(())
}

pub fn train(config: &RunConfig) -> Result<()> {
    let (reviews, space) = load_strict(required_corpus(config)?)?;
    let vocab = fit_vocabulary(&reviews, config.max_words)?;
    let mc = model_config(config, vocab.size(), space.n_labels());
    let data = encode_all(&reviews, &vocab, mc.maxlen, &space)?;
    let kinds = config.arch.kinds();
    let mut writer = ManifestWriter::begin(config, vec![config.seed])?;

    let log_epochs = kinds.len() == 1;
    let trained = run_parallel(kinds.len(), |i| {
        let mut net = build_network(kinds[i], &mc, config.seed)?;
        let history = train_model(&mut net, &data, &train_config(config, config.seed, log_epochs))?;
        Ok((net, history))
    })?;

    for (kind, (net, history)) in kinds.iter().zip(trained) {
        std::fs::create_dir_all(writer.out_dir().join(kind.name()))?;
        let checkpoint_path = writer.artifact(&format!("{}/checkpoint.json", kind.name()));
        save_checkpoint(&checkpoint_path, &net, &vocab, &space)?;
        let history_path = writer.artifact(&format!("{}/history.json", kind.name()));
        std::fs::write(&history_path, serde_json::to_string_pretty(&history)? + "\n")?;
        let last = history.epoch_loss.last().copied().unwrap_or(f64::NAN);
        println!(
            "{}: {} examples, {} epochs, final loss {last:.6} -> {}",
            kind.name(),
            data.len(),
            config.epochs,
            checkpoint_path.display()
        );
    }
    writer.finish()
}

/// Train/score repetitions shared by `evaluate`; one entry per run, each
/// scored with and without conflict resolution.
struct ScoredRun {
    with_cpt: MetricsReport,
    without_cpt: MetricsReport,
}

/// (run index, fold index if any, model seed, scores) for one repetition.
type RepResult = (usize, Option<usize>, u64, ScoredRun);

/// (architecture name, CPT on, report) feeding one table row.
type TableRow = (String, bool, MetricsReport);

fn score_network(
    net: &Network,
    test: &[EncodedExample],
    config: &RunConfig,
) -> Result<ScoredRun> {
    Ok(ScoredRun {
        with_cpt: evaluate_model(net, test, config.threshold, Some(config.cpt_margin))?,
        without_cpt: evaluate_model(net, test, config.threshold, None)?,
    })
}

/// Builds run rows, aggregate rows, and table rows from per-repetition
/// reports grouped by architecture.
fn assemble_rows(
    kinds: &[ArchitectureKind],
    per_kind: Vec<Vec<RepResult>>,
) -> Result<(Vec<RunRow>, Vec<AggRow>, Vec<TableRow>)> {
    let mut run_rows = Vec::new();
    let mut agg_rows = Vec::new();
    let mut table_rows = Vec::new();
    for (kind, scored) in kinds.iter().zip(per_kind) {
        for cpt in [true, false] {
            let reports: Vec<MetricsReport> = scored
                .iter()
                .map(|(_, _, _, s)| if cpt { s.with_cpt.clone() } else { s.without_cpt.clone() })
                .collect();
            for ((run, fold, seed, _), report) in scored.iter().zip(&reports) {
                run_rows.push(RunRow {
                    arch: kind.name().to_string(),
                    cpt,
                    run: *run,
                    fold: *fold,
                    seed: *seed,
                    report: report.clone(),
                });
            }
            let aggregate = aggregate_runs(&reports)?;
            table_rows.push((kind.name().to_string(), cpt, aggregate.mean.clone()));
            agg_rows.push(AggRow {
                arch: kind.name().to_string(),
                cpt,
                aggregate,
            });
        }
    }
    Ok((run_rows, agg_rows, table_rows))
}

/// Writes report.json (stable five-significant-digit JSON), report_full.json
/// (full-precision floats), and report.txt; prints the tables.
fn write_reports(
    writer: &mut ManifestWriter,
    run_rows: &[RunRow],
    agg_rows: &[AggRow],
    table_rows: &[TableRow],
) -> Result<()> {
    let stable = render_report_json(run_rows, agg_rows);
    std::fs::write(writer.artifact("report.json"), stable)?;

    let full = serde_json::json!({
        "runs": run_rows
            .iter()
            .map(|r| serde_json::json!({
                "arch": r.arch,
                "cpt": r.cpt,
                "run": r.run,
                "fold": r.fold,
                "seed": r.seed,
                "report": r.report,
            }))
            .collect::<Vec<_>>(),
        "aggregates": agg_rows
            .iter()
            .map(|a| serde_json::json!({
                "arch": a.arch,
                "cpt": a.cpt,
                "aggregate": a.aggregate,
            }))
            .collect::<Vec<_>>(),
    });
    std::fs::write(
        writer.artifact("report_full.json"),
        serde_json::to_string_pretty(&full)? + "\n",
    )?;

    let text = render_tables(table_rows)?;
    std::fs::write(writer.artifact("report.txt"), &text)?;
    print!("{text}");
    Ok(())
}

pub fn evaluate(config: &RunConfig) -> Result<()> {
    let (reviews, space) = load_strict(required_corpus(config)?)?;
    let (train_reviews, test_reviews) = match &config.test_corpus {
        Some(path) => {
            let (test_reviews, test_space) = load_strict(path)?;
            if test_space != space {
                return Err(Error::invalid(
                    "train and test corpora declare different label spaces",
                ));
            }
            (reviews, test_reviews)
        }
        None => {
            let (tr, te) = holdout_split(reviews.len(), config.test_fraction, config.seed)?;
            (select(&reviews, &tr), select(&reviews, &te))
        }
    };
    if train_reviews.is_empty() || test_reviews.is_empty() {
        return Err(Error::invalid("both the train and test sets must be non-empty"));
    }

    let vocab = fit_vocabulary(&train_reviews, config.max_words)?;
    let mc = model_config(config, vocab.size(), space.n_labels());
    let train_data = encode_all(&train_reviews, &vocab, mc.maxlen, &space)?;
    let test_data = encode_all(&test_reviews, &vocab, mc.maxlen, &space)?;

    let kinds = config.arch.kinds();
    let run_seeds: Vec<u64> = (0..config.runs as u64).map(|i| config.seed + i).collect();
    let mut writer = ManifestWriter::begin(config, run_seeds.clone())?;

    let scored = run_parallel(kinds.len() * config.runs, |job| {
        let kind = kinds[job / config.runs];
        let seed = run_seeds[job % config.runs];
        let mut net = build_network(kind, &mc, seed)?;
        train_model(&mut net, &train_data, &train_config(config, seed, false))?;
        score_network(&net, &test_data, config)
    })?;

    let mut scored = scored.into_iter();
    let per_kind: Vec<Vec<RepResult>> = kinds
        .iter()
        .map(|_| {
            (0..config.runs)
                .map(|run| (run, None, run_seeds[run], scored.next().expect("one result per job")))
                .collect()
        })
        .collect();

    let (run_rows, agg_rows, table_rows) = assemble_rows(&kinds, per_kind)?;
    write_reports(&mut writer, &run_rows, &agg_rows, &table_rows)?;
    writer.finish()
}

pub fn crossval(config: &RunConfig) -> Result<()> {
    let (reviews, space) = load_strict(required_corpus(config)?)?;
    let kinds = config.arch.kinds();
    let k = config.k;
    let run_seeds: Vec<u64> = (0..config.runs as u64).map(|r| config.seed + r).collect();
    let plans = run_seeds
        .iter()
        .map(|&s| kfold_plan(reviews.len(), k, s))
        .collect::<Result<Vec<_>>>()?;
    let mut writer = ManifestWriter::begin(config, run_seeds.clone())?;

    let per_run = config.runs * k;
    let outcomes = run_parallel(kinds.len() * per_run, |job| {
        let kind = kinds[job / per_run];
        let run = (job % per_run) / k;
        let fold = job % k;
        let plan = &plans[run];
        let fold_train = select(&reviews, &plan.train_indices(fold));
        let fold_test = select(&reviews, &plan.test_indices(fold));
        let vocab = fit_vocabulary(&fold_train, config.max_words)?;
        let mc = model_config(config, vocab.size(), space.n_labels());
        let train_data = encode_all(&fold_train, &vocab, mc.maxlen, &space)?;
        let test_data = encode_all(&fold_test, &vocab, mc.maxlen, &space)?;
        let model_seed = config.seed + (run * k + fold) as u64;
        let mut net = build_network(kind, &mc, model_seed)?;
        train_model(&mut net, &train_data, &train_config(config, model_seed, false))?;
        let scored = score_network(&net, &test_data, config)?;
        Ok((net, vocab, model_seed, scored))
    })?;

    let mut outcomes = outcomes.into_iter();
    let mut per_kind = Vec::with_capacity(kinds.len());
    for kind in &kinds {
        let mut scored_runs = Vec::with_capacity(per_run);
        for run in 0..config.runs {
            for fold in 0..k {
                let (net, vocab, model_seed, scored) =
                    outcomes.next().expect("one result per job");
                let dir = format!("{}/run{run}/fold{fold}", kind.name());
                std::fs::create_dir_all(writer.out_dir().join(&dir))?;
                let path = writer.artifact(&format!("{dir}/checkpoint.json"));
                save_checkpoint(&path, &net, &vocab, &space)?;
                scored_runs.push((run, Some(fold), model_seed, scored));
            }
        }
        per_kind.push(scored_runs);
    }

    let (run_rows, agg_rows, table_rows) = assemble_rows(&kinds, per_kind)?;
    write_reports(&mut writer, &run_rows, &agg_rows, &table_rows)?;
    writer.finish()
}

pub fn predict(config: &RunConfig) -> Result<()> {
    let checkpoint = config
        .checkpoint
        .as_ref()
        .ok_or_else(|| Error::Checkpoint("no checkpoint given; pass --checkpoint <path>".into()))?;
    if !checkpoint.is_file() {
        return Err(Error::Checkpoint(format!(
            "checkpoint {} does not exist",
            checkpoint.display()
        )));
    }
    let input = config
        .input
        .as_ref()
        .ok_or_else(|| Error::invalid("no input file given; pass --input <path>"))?;
    let (net, vocab, space) = load_checkpoint(checkpoint)?;

    let raw = std::fs::read_to_string(input)
        .map_err(|e| Error::invalid(format!("cannot read input {}: {e}", input.display())))?;
    let texts: Vec<String> = raw
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect();
    if texts.is_empty() {
        return Err(Error::invalid("input file contains no text lines"));
    }

    let margin = config.cpt.then_some(config.cpt_margin);
    let predictions = predict_texts(&net, &texts, &vocab, &space, config.threshold, margin)?;

    let mut writer = ManifestWriter::begin(config, vec![config.seed])?;
    let path = writer.artifact("predictions.jsonl");
    let mut out = String::new();
    for p in &predictions {
        let line = serde_json::to_string(p)?;
        println!("{line}");
        out.push_str(&line);
        out.push('\n');
    }
    std::fs::write(&path, out)?;
    writer.finish()
}

pub fn gradcheck(config: &RunConfig) -> Result<()> {
    let entries = full_gradient_suite(config.epsilon, config.trials, config.seed)?;
    let mut writer = ManifestWriter::begin(config, vec![config.seed])?;

    let checks: Vec<Stable> = entries
        .iter()
        .map(|e| {
            Stable::obj([
                ("coords_checked", Stable::UInt(e.coords_checked as u64)),
                ("max_rel_error", Stable::Float(e.max_rel_error)),
                ("name", Stable::Str(e.name.clone())),
                ("passed", Stable::Bool(e.passed())),
                ("trials", Stable::UInt(e.trials as u64)),
            ])
        })
        .collect();
    let json = Stable::obj([
        ("checks", Stable::Arr(checks)),
        ("epsilon", Stable::Float(config.epsilon)),
        ("tolerance", Stable::Float(CHECK_TOLERANCE)),
    ])
    .render()
        + "\n";
    std::fs::write(writer.artifact("gradcheck.json"), json)?;

    let mut failures = Vec::new();
    for e in &entries {
        println!(
            "{:<22} max_rel_error={:.3e}  trials={:<3} coords={:<6} {}",
            e.name,
            e.max_rel_error,
            e.trials,
            e.coords_checked,
            if e.passed() { "PASS" } else { "FAIL" }
        );
        if !e.passed() {
            failures.push(e.name.clone());
        }
    }
    writer.finish()?;
    if !failures.is_empty() {
        return Err(Error::GradientCheck(format!(
            "{} of {} checks exceeded tolerance {CHECK_TOLERANCE:e}: {}",
            failures.len(),
            entries.len(),
            failures.join(", ")
        )));
    }
    println!(
        "all {} gradient checks passed (tolerance {CHECK_TOLERANCE:e})",
        entries.len()
    );
    Ok(())
}

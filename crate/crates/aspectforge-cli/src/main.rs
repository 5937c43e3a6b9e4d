//! `aspectforge`: train, evaluate, and run joint aspect/polarity models.
//!
//! Exit codes: 0 success, 2 usage error, 3 corpus missing or malformed,
//! 4 checkpoint missing or corrupt, 5 integrity hash mismatch, 6 gradient
//! check failure, 1 anything else.

mod commands;
mod config;
mod manifest;
mod parallel;
mod report;

use std::path::PathBuf;

use aspectforge::Error;
use clap::{Args, Parser, Subcommand};

use config::{load_config_file, parse_switch, resolve, ArchSelection, ConfigLayer};

fn parse_arch(s: &str) -> std::result::Result<ArchSelection, String> {
    s.parse()
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// JSON config file; a previous run's manifest.json also works
    #[arg(long)]
    config: Option<PathBuf>,

    /// Print the fully resolved configuration as JSON and exit
    #[arg(long)]
    print_config: bool,

    /// Labeled corpus (JSONL: header line with aspects, then reviews)
    #[arg(long)]
    corpus: Option<PathBuf>,

    /// Separate test corpus; without it, evaluate splits --corpus
    #[arg(long)]
    test_corpus: Option<PathBuf>,

    /// Fraction held out for testing when no test corpus is given
    #[arg(long)]
    test_fraction: Option<f64>,

    /// Architecture: cnn, lstm, bilstm, gru, or all
    #[arg(long, alias = "architecture", value_parser = parse_arch)]
    arch: Option<ArchSelection>,

    /// Base seed for initialization, shuffling, splits, and synthesis
    #[arg(long)]
    seed: Option<u64>,

    /// Output directory for the manifest and all artifacts
    #[arg(long)]
    out: Option<PathBuf>,

    /// Resolve polarity conflicts in predictions: on or off
    #[arg(long, value_parser = parse_switch, value_name = "on|off")]
    cpt: Option<bool>,

    /// Decision threshold on label probabilities
    #[arg(long)]
    threshold: Option<f64>,

    /// Minimum probability advantage a polarity needs to survive a conflict
    #[arg(long)]
    cpt_margin: Option<f64>,

    /// Number of cross-validation folds
    #[arg(long)]
    k: Option<usize>,

    /// Training repetitions (run i uses seed + i)
    #[arg(long)]
    runs: Option<usize>,

    /// Training epochs
    #[arg(long)]
    epochs: Option<usize>,

    /// Minibatch size
    #[arg(long)]
    batch_size: Option<usize>,

    /// Learning rate
    #[arg(long)]
    lr: Option<f64>,

    /// Dropout rate in [0, 1)
    #[arg(long)]
    dropout: Option<f64>,

    /// Recurrent hidden units
    #[arg(long)]
    hidden: Option<usize>,

    /// Word embedding dimensions
    #[arg(long)]
    embedding_dim: Option<usize>,

    /// Token sequence length (pad or cut to exactly this many)
    #[arg(long)]
    maxlen: Option<usize>,

    /// Convolution window, in tokens
    #[arg(long)]
    kernel_size: Option<usize>,

    /// Convolution filter count
    #[arg(long)]
    filters: Option<usize>,

    /// Batch normalization before the output layer: on or off
    #[arg(long, value_parser = parse_switch, value_name = "on|off")]
    batchnorm: Option<bool>,

    /// Cap the fitted vocabulary to the most frequent words
    #[arg(long)]
    max_words: Option<usize>,

    /// synthesize: number of aspect categories
    #[arg(long)]
    aspects: Option<usize>,

    /// synthesize: number of reviews
    #[arg(long)]
    examples: Option<usize>,

    /// synthesize: word budget for the generated vocabulary
    #[arg(long)]
    vocab_size: Option<usize>,

    /// predict: trained checkpoint to load
    #[arg(long)]
    checkpoint: Option<PathBuf>,

    /// predict: file with one review text per line
    #[arg(long)]
    input: Option<PathBuf>,

    /// gradcheck: randomized trials per checked unit
    #[arg(long)]
    trials: Option<usize>,

    /// gradcheck: finite-difference step size
    #[arg(long)]
    epsilon: Option<f64>,
}

impl CommonArgs {
    fn layer(&self) -> ConfigLayer {
        ConfigLayer {
            command: None,
            corpus: self.corpus.clone(),
            test_corpus: self.test_corpus.clone(),
            test_fraction: self.test_fraction,
            arch: self.arch,
            seed: self.seed,
            out: self.out.clone(),
            cpt: self.cpt,
            threshold: self.threshold,
            cpt_margin: self.cpt_margin,
            k: self.k,
            runs: self.runs,
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            dropout: self.dropout,
            hidden: self.hidden,
            embedding_dim: self.embedding_dim,
            maxlen: self.maxlen,
            kernel_size: self.kernel_size,
            filters: self.filters,
            batchnorm: self.batchnorm,
            max_words: self.max_words,
            aspects: self.aspects,
            examples: self.examples,
            vocab_size: self.vocab_size,
            checkpoint: self.checkpoint.clone(),
            input: self.input.clone(),
            trials: self.trials,
            epsilon: self.epsilon,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "aspectforge",
    version,
    about = "Joint aspect-category and polarity classification for short reviews"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train on a whole corpus and save a checkpoint per architecture
    Train(CommonArgs),
    /// Repeat train/score cycles on a held-out split, with and without
    /// conflict resolution, and aggregate the runs
    Evaluate(CommonArgs),
    /// Label texts with a trained checkpoint
    Predict(CommonArgs),
    /// K-fold cross-validation with per-fold models and aggregate reports
    Crossval(CommonArgs),
    /// Generate a synthetic labeled corpus
    Synthesize(CommonArgs),
    /// Compare analytic gradients with finite differences
    Gradcheck(CommonArgs),
}

impl Command {
    fn split(&self) -> (&'static str, &CommonArgs) {
        match self {
            Command::Train(a) => ("train", a),
            Command::Evaluate(a) => ("evaluate", a),
            Command::Predict(a) => ("predict", a),
            Command::Crossval(a) => ("crossval", a),
            Command::Synthesize(a) => ("synthesize", a),
            Command::Gradcheck(a) => ("gradcheck", a),
        }
    }
}

fn run(cli: &Cli) -> aspectforge::Result<()> {
    let (name, args) = cli.command.split();
    let file_layer = match &args.config {
        Some(path) => load_config_file(path)?,
        None => ConfigLayer::default(),
    };
    let config = resolve(name, &args.layer(), &file_layer)?;
    if args.print_config {
        println!("{}", serde_json::to_string_pretty(&config)?);
        return Ok(());
    }
    match name {
        "train" => commands::train(&config),
        "evaluate" => commands::evaluate(&config),
        "predict" => commands::predict(&config),
        "crossval" => commands::crossval(&config),
        "synthesize" => commands::synthesize(&config),
        "gradcheck" => commands::gradcheck(&config),
        _ => unreachable!("subcommands are exhaustive"),
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Corpus { .. } => 3,
        Error::Checkpoint(_) => 4,
        Error::HashMismatch { .. } => 5,
        Error::GradientCheck(_) => 6,
        _ => 1,
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("error: {e}");
        std::process::exit(exit_code(&e));
    }
}

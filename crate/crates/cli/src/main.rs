mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::RunConfig;

/// Word-cluster features for classifying short posts from small labeled sets.
#[derive(Debug, Parser)]
#[command(name = "lexcluster", version)]
pub struct Cli {
    /// JSON run configuration (default: $LEXCLUSTER_CONFIG).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Global seed; each stage adds its own fixed offset.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    /// More logging; repeat for more detail.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    Labeled,
    Unlabeled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TableArg {
    Input,
    Output,
}

#[derive(Debug, Args)]
pub struct TokenizerArgs {
    /// Stopword file, one word per line.
    #[arg(long)]
    pub stopwords: Option<PathBuf>,
    /// Keep stopwords.
    #[arg(long)]
    pub no_stopwords: bool,
    #[arg(long)]
    pub min_len: Option<usize>,
    #[arg(long)]
    pub max_len: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tokenize a corpus and write it back with a `tokens` field.
    Preprocess {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "labeled")]
        kind: Kind,
        #[command(flatten)]
        tokenizer: TokenizerArgs,
    },
    /// Print corpus statistics as JSON.
    Stats {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "labeled")]
        kind: Kind,
        #[command(flatten)]
        tokenizer: TokenizerArgs,
    },
    /// Seeded train/test split of a labeled corpus.
    Split {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        train_out: PathBuf,
        #[arg(long)]
        test_out: PathBuf,
        #[arg(long)]
        train_fraction: Option<f64>,
    },
    /// Brown clustering of an unlabeled corpus.
    Brown {
        #[arg(long)]
        input: PathBuf,
        /// Cluster file (`cluster_id<TAB>word`) for the cut at `--k`.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        window: Option<usize>,
        #[arg(long)]
        min_count: Option<u64>,
        /// Merge-tree paths (`path<TAB>word<TAB>frequency`).
        #[arg(long)]
        paths: Option<PathBuf>,
        /// Full merge history as JSON, usable by `experiment`.
        #[arg(long)]
        dendrogram: Option<PathBuf>,
        /// Recompute every merge cost from scratch.
        #[arg(long)]
        exact: bool,
        #[command(flatten)]
        tokenizer: TokenizerArgs,
    },
    /// Train skip-gram embeddings with negative sampling.
    Embed {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        window: Option<usize>,
        #[arg(long)]
        negatives: Option<usize>,
        #[arg(long)]
        subsample: Option<f64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        min_count: Option<u64>,
        /// Which vector table to write.
        #[arg(long, value_enum, default_value = "output")]
        table: TableArg,
        #[command(flatten)]
        tokenizer: TokenizerArgs,
    },
    /// k-means over word vectors.
    Kmeans {
        #[arg(long)]
        vectors: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        restarts: Option<usize>,
        #[arg(long)]
        max_iters: Option<usize>,
        /// Cluster unit-length vectors.
        #[arg(long)]
        normalize: bool,
    },
    /// Build a feature spec and optionally featurize a corpus.
    Featurize {
        /// Labeled corpus used to fit PMI for `--bow-k`, or to featurize.
        #[arg(long)]
        input: PathBuf,
        /// Existing feature spec.
        #[arg(long, conflicts_with_all = ["bow_k", "clusters"])]
        spec: Option<PathBuf>,
        /// Top-k PMI words.
        #[arg(long, conflicts_with = "clusters")]
        bow_k: Option<usize>,
        /// Cluster file.
        #[arg(long)]
        clusters: Option<PathBuf>,
        #[arg(long)]
        spec_out: Option<PathBuf>,
        /// Sparse feature rows as JSON lines.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        tokenizer: TokenizerArgs,
    },
    /// Train L2-regularized logistic regression.
    Train {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Fixed λ; otherwise chosen by cross-validation over the grid.
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        lambda_grid: Option<Vec<f64>>,
        /// k-fold instead of leave-one-out.
        #[arg(long)]
        cv: Option<usize>,
        #[command(flatten)]
        tokenizer: TokenizerArgs,
    },
    /// Score a corpus with a trained model.
    Score {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// CSV `id,score,predicted[,label]`.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[arg(long, value_enum, default_value = "labeled")]
        kind: Kind,
        #[command(flatten)]
        tokenizer: TokenizerArgs,
    },
    /// Run a training-size by cluster-count grid and write result tables.
    Experiment {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        resamples: Option<usize>,
        #[arg(long)]
        cv: Option<usize>,
        #[command(flatten)]
        tokenizer: TokenizerArgs,
    },
    /// Generate a synthetic benchmark with planted word clusters.
    GenSynthetic {
        /// Output directory for train/test/unlabeled corpora and the oracle.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        n_labeled: Option<usize>,
        #[arg(long)]
        n_unlabeled: Option<usize>,
        #[arg(long)]
        n_clusters: Option<usize>,
        #[arg(long)]
        words_per_cluster: Option<usize>,
        #[arg(long)]
        positive_prior: Option<f64>,
    },
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl From<lexcluster::Error> for CliError {
    fn from(e: lexcluster::Error) -> Self {
        if e.is_numeric() {
            CliError::Numeric(e.to_string())
        } else if matches!(e, lexcluster::Error::Parameter(_)) {
            CliError::Usage(e.to_string())
        } else {
            CliError::Data(e.to_string())
        }
    }
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numeric(m) => m,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .init();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let result = RunConfig::load(cli.config.as_deref()).and_then(|cfg| commands::run(&cli, &cfg));
    match result {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

//! `privstory` command-line interface.
//!
//! Exit codes: 0 ok, 1 internal error, 2 a protocol run failed,
//! 3 configuration, usage or I/O error, 4 input data failed validation.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "privstory", version, about = "Privacy-disclosure detection for agile user stories")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a corpus and print per-dataset statistics
    Ingest(IngestArgs),
    /// Privacy dictionary utilities
    #[command(subcommand)]
    Dict(DictCommand),
    /// Write lexicon, NLP or encoded features for a corpus
    Featurize(FeaturizeArgs),
    /// Train one model on the balanced pool of a corpus
    Train(TrainArgs),
    /// Pretrain the NLP network used by the transfer model
    Pretrain(PretrainArgs),
    /// Train the transfer model on top of a pretrained checkpoint
    Transfer(TransferArgs),
    /// Run repeated balanced cross-validation and write a results directory
    Evaluate(EvaluateArgs),
    /// McNemar test between two models of a results directory
    Mcnemar(McnemarArgs),
    /// Score stories with a trained model
    Predict(PredictArgs),
    /// Render the markdown report of a results directory
    Report(ReportArgs),
    /// Generate a labelled surrogate corpus for pretraining
    GenSurrogate(GenArgs),
    /// Generate a synthetic annotated user-story corpus
    GenStories(GenStoriesArgs),
}

#[derive(Subcommand)]
enum DictCommand {
    /// Print the category table of a dictionary
    Inspect(DictArgs),
    /// Write a dictionary in its text format
    Export {
        #[command(flatten)]
        dict: DictArgs,
        /// Output file
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Clone)]
struct DictArgs {
    /// Dictionary file; the bundled seed dictionary when omitted
    #[arg(long)]
    dictionary: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Auto,
    Jsonl,
    Csv,
}

#[derive(Args, Clone)]
struct CorpusArgs {
    /// Annotated corpus (JSONL or CSV)
    #[arg(long)]
    corpus: PathBuf,
    /// Corpus format
    #[arg(long, value_enum, default_value = "auto")]
    format: FormatArg,
    /// Dataset manifest (TSV: id, description, declared size)
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[command(flatten)]
    dict: DictArgs,
    /// Recompute privacy words from the dictionary instead of trusting the file
    #[arg(long)]
    annotate_privacy: bool,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum ProtocolArg {
    /// 5 repeats, reduced network widths
    Desk,
    /// 40 repeats, full network widths
    Paper,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReprArg {
    Bag,
    Sequence,
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// Preset for repeats and network sizes
    #[arg(long, value_enum, default_value = "desk")]
    protocol: ProtocolArg,
    /// Pipeline config file (key = value); replaces the preset
    #[arg(long)]
    pipeline_config: Option<PathBuf>,
    /// Shallow NLP representation
    #[arg(long, value_enum, default_value = "bag")]
    nlp_shallow_repr: ReprArg,
    /// Pretrained checkpoint for pd_tl
    #[arg(long)]
    pretrained: Option<PathBuf>,
    /// Pretrained layers left trainable in pd_tl
    #[arg(long)]
    unfreeze_top: Option<usize>,
    /// Master seed
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args)]
struct IngestArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Write the validated corpus here (format from extension)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FeatureKind {
    /// Per-category dictionary fractions (CSV)
    Pw,
    /// Shallow NLP representation (CSV)
    Nlp,
    /// Padded sequences and side features (binary cache)
    Encoded,
}

#[derive(Args)]
struct FeaturizeArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Feature kind
    #[arg(long, value_enum, default_value = "pw")]
    features: FeatureKind,
    /// Shallow NLP representation
    #[arg(long, value_enum, default_value = "bag")]
    nlp_shallow_repr: ReprArg,
    /// Sequence length for padded channels
    #[arg(long, default_value_t = 30)]
    seq_len: usize,
    /// Minimum token count for vocabulary entries
    #[arg(long, default_value_t = 1)]
    min_count: usize,
    /// Output file
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[command(flatten)]
    model_args: ModelArgs,
    /// Model id, e.g. rf_pw, lr_nlp, cnn_pw, cnn_nlp, pd_tl
    #[arg(long)]
    model: String,
    /// Output model directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PretrainArgs {
    /// Labelled corpus to pretrain on
    #[arg(long, conflicts_with = "surrogate")]
    corpus: Option<PathBuf>,
    /// Pretrain on a generated surrogate corpus of this size instead
    #[arg(long)]
    surrogate: Option<usize>,
    /// Preset for network sizes
    #[arg(long, value_enum, default_value = "desk")]
    protocol: ProtocolArg,
    /// Pipeline config file (key = value); replaces the preset
    #[arg(long)]
    pipeline_config: Option<PathBuf>,
    /// Accept fewer than 200 samples
    #[arg(long)]
    allow_small: bool,
    /// Master seed
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Output checkpoint
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TransferArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Preset for network sizes
    #[arg(long, value_enum, default_value = "desk")]
    protocol: ProtocolArg,
    /// Pipeline config file (key = value); replaces the preset
    #[arg(long)]
    pipeline_config: Option<PathBuf>,
    /// Pretrained checkpoint
    #[arg(long)]
    pretrained: PathBuf,
    /// Pretrained layers left trainable
    #[arg(long)]
    unfreeze_top: Option<usize>,
    /// Master seed
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Output model directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[command(flatten)]
    model_args: ModelArgs,
    /// Comma-separated model ids, or `all`
    #[arg(long, default_value = "all")]
    models: String,
    /// Repeats of k-fold cross-validation (preset when omitted)
    #[arg(long)]
    repeats: Option<usize>,
    /// Folds per repeat
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// Worker threads per model
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Significance level for McNemar tests
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Results directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct McnemarArgs {
    /// Results directory
    #[arg(long)]
    results: PathBuf,
    /// First model id
    #[arg(long)]
    a: String,
    /// Second model id
    #[arg(long)]
    b: String,
    /// Significance level
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
}

#[derive(Args)]
struct PredictArgs {
    /// Trained model directory
    #[arg(long)]
    model: PathBuf,
    /// Annotated stories to score (JSONL or CSV)
    #[arg(long, conflicts_with = "text")]
    annotations: Option<PathBuf>,
    /// Story text; lexicon models only
    text: Option<String>,
    /// One JSON object per story
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// Results directory
    #[arg(long)]
    results: PathBuf,
    /// Report file; `<results>/report.md` when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    /// Number of stories
    #[arg(long, default_value_t = 2000)]
    n: usize,
    /// Generator seed
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Output corpus (format from extension)
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenStoriesArgs {
    #[command(flatten)]
    gen: GenArgs,
    /// Share of feature verbs written as rare compounds
    #[arg(long, default_value_t = 0.5)]
    rare_verb_rate: f64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { commands::EXIT_CONFIG } else { 0 });
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

//! `foilcap`: build corpora, train and evaluate FOIL classifiers, run
//! ablations and explanation audits.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use foilcap_core::{Error, ErrorKind};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "foilcap", version, about = "Foiled-caption detection experiments", args_override_self = true)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Convert FOIL annotations, MSCOCO instances and optional detections into a corpus directory.
    Ingest(IngestArgs),
    /// Generate a synthetic corpus with a controllable foil-word bias.
    Synth(SynthArgs),
    /// Train one classifier configuration.
    Train(TrainArgs),
    /// Evaluate a trained model on a corpus test split.
    Eval(EvalArgs),
    /// Train and evaluate a grid of configurations.
    Ablate(AblateArgs),
    /// Explain FOIL predictions and measure how often the foiled word is the top feature.
    Explain(ExplainArgs),
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct IngestArgs {
    /// FOIL annotation file for the training split.
    #[arg(long)]
    pub foil_json: PathBuf,
    /// MSCOCO instances file for the training images.
    #[arg(long)]
    pub coco_instances: PathBuf,
    /// FOIL annotation file for the test split.
    #[arg(long, requires = "test_coco_instances")]
    pub test_foil_json: Option<PathBuf>,
    /// MSCOCO instances file for the test images.
    #[arg(long, requires = "test_foil_json")]
    pub test_coco_instances: Option<PathBuf>,
    /// Detector output in the MSCOCO results layout (enables the pred source).
    #[arg(long)]
    pub detections: Option<PathBuf>,
    /// Minimum detection confidence kept.
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Part-of-speech subset tag recorded on every example.
    #[arg(long, default_value = "noun")]
    pub pos: String,
    /// Output corpus directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Run file of `key = value` lines; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct SynthArgs {
    /// Number of images.
    #[arg(long, default_value_t = 1000)]
    pub n_images: usize,
    #[arg(long, default_value_t = 5)]
    pub captions_per_image: usize,
    /// 0 draws foil words uniformly; 1 restricts them to the leaky word list.
    #[arg(long, default_value_t = 0.0)]
    pub bias: f64,
    /// Comma-separated leaky category names (default: the ten alphabetically first).
    #[arg(long)]
    pub leaky_words: Option<String>,
    /// Width of the synthetic image embeddings written to embeddings.txt; 0 writes none.
    #[arg(long, default_value_t = 128)]
    pub embedding_dim: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output corpus directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Feature, architecture and optimizer options shared by `train` and `ablate`.
#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct ModelOptions {
    /// Embedding file for cnn features (default: <corpus>/embeddings.txt).
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Hidden widths of the MLP, comma-separated.
    #[arg(long, default_value = "100,100")]
    pub mlp_hidden: String,
    /// LSTM word-embedding width.
    #[arg(long, default_value_t = 100)]
    pub embed_dim: usize,
    /// LSTM hidden width.
    #[arg(long, default_value_t = 200)]
    pub hidden_dim: usize,
    /// mm-lstm: also initialize the cell state from the image.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub init_cell: bool,
    /// Words seen fewer times in training map to the unknown index.
    #[arg(long, default_value_t = 1)]
    pub min_count: usize,
    /// Token sequences are truncated to this length.
    #[arg(long, default_value_t = 20)]
    pub max_len: usize,
    /// Standardize image features with training statistics.
    #[arg(long, default_value_t = false, action = clap::ArgAction::Set)]
    pub standardize: bool,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 256)]
    pub batch_size: usize,
    /// Epochs without validation improvement before stopping.
    #[arg(long, default_value_t = 5)]
    pub patience: usize,
    /// Share of the training split held out for model selection.
    #[arg(long, default_value_t = 0.1)]
    pub validation_fraction: f64,
    #[arg(long, default_value_t = 0.001)]
    pub learning_rate: f64,
    /// Seed for splitting, initialization and batch order.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct TrainArgs {
    /// Corpus directory (train.jsonl, test.jsonl).
    #[arg(long)]
    pub corpus: PathBuf,
    /// Classifier: mlp (MLP rows), lstm (LSTM rows, image appended after the sequence),
    /// mm-lstm (image initializes the recurrent state).
    #[arg(long, value_parser = ["mlp", "lstm", "mm-lstm"])]
    pub model: String,
    /// Image features: none (text-only rows such as "BOW" and "LSTM"), freq ("Gold Freq"),
    /// mention (binary presence), cnn (precomputed "CNN" embeddings).
    #[arg(long, default_value = "none", value_parser = ["none", "mention", "freq", "cnn"])]
    pub image_feats: String,
    /// Object source for mention/freq: gold annotations or pred detections.
    #[arg(long, default_value = "gold", value_parser = ["gold", "pred"])]
    pub source: String,
    /// Text features: bow ("BOW" rows, mlp), tokens ("LSTM" rows), none (image-only rows).
    /// Defaults to bow for mlp and tokens otherwise.
    #[arg(long, value_parser = ["none", "bow", "tokens"])]
    pub text_feats: Option<String>,
    #[command(flatten)]
    #[serde(flatten)]
    pub options: ModelOptions,
    /// Output directory for model.json and train_log.csv.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct EvalArgs {
    /// model.json, or a directory containing it.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    /// Embedding file for cnn models (default: <corpus>/embeddings.txt).
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Output directory for report.csv and report.jsonl.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct AblateArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Grid file with one image/text/classifier cell per line, e.g. `gold-freq/bow/mlp`.
    /// Takes precedence over --preset.
    #[arg(long)]
    pub grid: Option<PathBuf>,
    /// Built-in grid: standard (eight rows: image-only, MLP+BOW, LSTM) or full.
    #[arg(long, default_value = "standard", value_parser = ["standard", "full"])]
    pub preset: String,
    /// Cells trained in parallel (default: all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub options: ModelOptions,
    /// Output directory for ablation.csv and ablation.jsonl.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct ExplainArgs {
    /// model.json, or a directory containing it.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Perturbed captions per explanation.
    #[arg(long, default_value_t = 1000)]
    pub n_samples: usize,
    /// Kernel width (default: 0.75 * sqrt(distinct words)).
    #[arg(long)]
    pub kernel_width: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory for audit.jsonl and summary.txt.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Usage => 1,
        ErrorKind::Data => 2,
        ErrorKind::Numeric => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let argv = match config::expand(std::env::args_os().collect()) {
        Ok(argv) => argv,
        Err(message) => {
            eprintln!("foilcap: {message}");
            return ExitCode::from(1);
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let rendered = e.to_string();
            let line = rendered.lines().find(|l| !l.trim().is_empty()).unwrap_or("invalid arguments");
            eprintln!("foilcap: {} (see --help)", line.trim_start_matches("error: "));
            return ExitCode::from(1);
        }
    };
    let outcome: Result<(), Error> = match &cli.command {
        Command::Ingest(a) => commands::ingest(a),
        Command::Synth(a) => commands::synth(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Ablate(a) => commands::ablate(a),
        Command::Explain(a) => commands::explain(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("foilcap: {e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}

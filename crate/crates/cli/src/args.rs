use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "asim", version, about = "Knowledge-unit relatedness with an attention sentence-pair model")]
pub struct Cli {
    /// Log level filter (error, warn, info, debug).
    #[arg(long, global = true, default_value = "info")]
    pub log: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tokenize a TSV dataset into a vocabulary and a token cache.
    Preprocess(PreprocessArgs),
    /// Train a model on a preprocessed cache.
    Train(TrainArgs),
    /// Train the baseline and its ablations with identical settings.
    Ablation(TrainArgs),
    /// Score a checkpoint on a labelled split.
    Eval(EvalArgs),
    /// Classify one pair of questions.
    Predict(PredictArgs),
    /// Write the attention matrix of one pair as CSV and an SVG heatmap.
    ExportAttention(ExportArgs),
    /// Vocabulary, co-occurrence and GloVe utilities.
    #[command(subcommand)]
    Embed(EmbedCommand),
    /// Generate synthetic pairs or corpora.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    /// Dataset in tab-separated form.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "ku4")]
    pub task: String,
    /// Directory for outputs not given explicitly.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long)]
    pub vocab_out: Option<PathBuf>,
    #[arg(long)]
    pub cache_out: Option<PathBuf>,
    #[arg(long, default_value_t = 250)]
    pub max_len: usize,
    #[arg(long, default_value_t = 1)]
    pub min_count: usize,
}

/// Settings shared by `train` and `ablation`. Every field may also come
/// from the `--config` file, which takes precedence over flags.
#[derive(Debug, Default, Clone, Args)]
pub struct Hyper {
    /// Flat key=value file overriding any flag.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub max_len: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Comma-separated components to remove: attn, fl, sc.
    #[arg(long)]
    pub ablate: Option<String>,
    #[arg(long)]
    pub task: Option<String>,
    /// GloVe text file; random vectors are used when absent.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    /// Comma-separated widths of the hidden prediction layers.
    #[arg(long)]
    pub prediction_hidden: Option<String>,
    #[arg(long)]
    pub train_embeddings: Option<bool>,
    #[arg(long)]
    pub clip_norm: Option<f64>,
    #[arg(long)]
    pub eval_every: Option<usize>,
    /// Share of the training cache held out when no --val is given.
    #[arg(long)]
    pub val_fraction: Option<f64>,
    /// Worker threads; 1 gives single-threaded runs.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Token cache written by `preprocess`.
    #[arg(long)]
    pub cache: PathBuf,
    /// Vocabulary file; defaults to vocab.txt next to the cache.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Validation cache; otherwise a share of --cache is held out.
    #[arg(long)]
    pub val: Option<PathBuf>,
    /// Test cache, used by `ablation` for the reported scores.
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[command(flatten)]
    pub hyper: Hyper,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Token cache (.jsonl) or raw TSV split.
    #[arg(long)]
    pub data: PathBuf,
    /// Label set of the split; defaults to the checkpoint's.
    #[arg(long)]
    pub task: Option<String>,
    /// Report directory; defaults to the checkpoint's directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct PairText {
    #[arg(long, default_value = "")]
    pub x_title: String,
    #[arg(long, default_value = "")]
    pub x_body: String,
    #[arg(long, default_value = "")]
    pub x_answers: String,
    #[arg(long, default_value = "")]
    pub y_title: String,
    #[arg(long, default_value = "")]
    pub y_body: String,
    #[arg(long, default_value = "")]
    pub y_answers: String,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub text: PairText,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub text: PairText,
    /// Take the pair from this cache instead of the text flags.
    #[arg(long, requires = "pair_id")]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub pair_id: Option<String>,
    /// Output prefix; `.csv` and `.svg` are appended.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum EmbedCommand {
    /// Build a vocabulary from a plain-text corpus (one document per line).
    BuildVocab {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 1)]
        min_count: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Count weighted co-occurrences within a window.
    Cooccur {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long, default_value_t = 10)]
        window: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit GloVe vectors to a co-occurrence file.
    Train {
        #[arg(long)]
        cooccur: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long, default_value_t = 300)]
        dim: usize,
        #[arg(long, default_value_t = 25)]
        epochs: usize,
        #[arg(long, default_value_t = 0.05)]
        lr: f64,
        #[arg(long, default_value_t = 100.0)]
        x_max: f64,
        #[arg(long, default_value_t = 0.75)]
        alpha: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Nearest neighbours of a token by cosine similarity.
    Inspect {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        token: String,
        #[arg(long, default_value_t = 10)]
        top: usize,
    },
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Number of labelled pairs to write as a TSV dataset.
    #[arg(long, conflicts_with = "corpus_tokens")]
    pub pairs: Option<usize>,
    /// Number of tokens to write as a plain-text corpus.
    #[arg(long)]
    pub corpus_tokens: Option<usize>,
    #[arg(long, default_value = "ku4")]
    pub task: String,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use scirel::corpus::SourceTag;
use scirel::eval::MacroOver;

use crate::config::Precision;

#[derive(Debug, Parser)]
#[command(
    name = "scirel",
    version,
    about = "Relation classification for entity pairs in scientific abstracts"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print corpus statistics and optionally dump records
    Inspect(InspectArgs),
    /// Train one configuration
    Train(TrainArgs),
    /// Run the hyperparameter grid, then refit the winner on train and validation data
    Grid(GridArgs),
    /// Label the relation pairs of a corpus with a trained model
    Predict(PredictArgs),
    /// Score a prediction file against gold relations
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    /// Annotated documents
    #[arg(long)]
    pub text: PathBuf,
    /// Relations file
    #[arg(long)]
    pub relations: PathBuf,
    #[arg(long, default_value = "task1.1")]
    pub task: SourceTag,
    /// Configuration file (only the preprocessing settings are used)
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Write statistics, dumps and a manifest here
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Write every document and relation as a JSON line
    #[arg(long)]
    pub dump_corpus: bool,
    /// Write every classification instance as a JSON line
    #[arg(long)]
    pub dump_instances: bool,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub train_text: PathBuf,
    #[arg(long)]
    pub train_relations: PathBuf,
    #[arg(long)]
    pub valid_text: Option<PathBuf>,
    #[arg(long)]
    pub valid_relations: Option<PathBuf>,
    /// Which subtask the train and validation files belong to
    #[arg(long, default_value = "task1.1")]
    pub task: SourceTag,
    /// Train on the union with the other subtask's data
    #[arg(long)]
    pub augment: bool,
    /// Documents of the other subtask (repeatable, paired with --augment-relations)
    #[arg(long)]
    pub augment_text: Vec<PathBuf>,
    #[arg(long)]
    pub augment_relations: Vec<PathBuf>,
}

/// Settings shared by `train` and `grid`. Flags override the config file.
#[derive(Debug, Args)]
pub struct RunArgs {
    /// TOML configuration file
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Pretrained word vectors in text format; random vectors are drawn when omitted
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Concurrent grid trials
    #[arg(long, env = "SCIREL_PARALLEL")]
    pub parallel: Option<usize>,
    #[arg(long)]
    pub macro_over: Option<MacroOver>,
    #[arg(long, value_enum)]
    pub precision: Option<Precision>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub max_seq_len: Option<usize>,
    #[arg(long)]
    pub n_filters: Option<usize>,
    /// Keep only the first N vectors of the embedding file
    #[arg(long)]
    pub vocab_limit: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[command(flatten)]
    pub train: TrainArgs,
    /// Also write one checkpoint per trial
    #[arg(long)]
    pub save_trials: bool,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub text: PathBuf,
    /// Entity pairs to label; labels in the file are ignored
    #[arg(long)]
    pub relations: PathBuf,
    #[arg(long, default_value = "task1.1")]
    pub task: SourceTag,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Gold relations file
    #[arg(long)]
    pub gold: PathBuf,
    /// Predictions in the same format
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long, default_value = "all")]
    pub macro_over: MacroOver,
    #[arg(long)]
    pub out_dir: PathBuf,
}

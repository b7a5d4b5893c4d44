//! Command-line arguments.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "readmit", version, about = "30-day readmission prediction on patient claim timelines")]
pub struct Cli {
    /// Default directory for cohorts, runs and searches.
    #[arg(long, global = true, env = "READMIT_DATA_DIR", default_value = "data")]
    pub data_dir: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic claims cohort and its summary.
    Synth(SynthArgs),
    /// Cross-validate one catalog model, or every model with `all`.
    Train(TrainArgs),
    /// Rank features of a trained run.
    Importance(ImportanceArgs),
    /// Uniform random hyperparameter search.
    Hyperopt(HyperoptArgs),
    /// Cohort and result tables as CSV.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub patients: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Cohort configuration JSON; fields not given keep their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a configuration field, e.g. `--set history_effect=0`.
    #[arg(long = "set", value_name = "FIELD=VALUE")]
    pub overrides: Vec<String>,
    /// Output directory [default: the data directory].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Catalog model name, or `all` for the full table.
    #[arg(long)]
    pub model: String,
    /// Claims CSV [default: <data-dir>/claims.csv].
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output directory; each model writes into a subdirectory [default: <data-dir>/runs].
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Model configuration JSON, e.g. a search's best config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a model configuration field, e.g. `--set training.max_epochs=5`.
    #[arg(long = "set", value_name = "FIELD=VALUE")]
    pub overrides: Vec<String>,
    /// Train logistic regressions like the neural models: fixed penalty, no
    /// refit on the validation split.
    #[arg(long)]
    pub equalize_lr: bool,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AbsentArg {
    StandardizedMean,
    RawZero,
}

#[derive(Debug, Args)]
pub struct ImportanceArgs {
    /// Run directory written by `train` [default: <data-dir>/runs/rnncrf-pairwise].
    #[arg(long)]
    pub run: Option<PathBuf>,
    /// diff_prob, diff_prob_weighted, ratio_diff_prob_weighted or lasso_coefficient.
    #[arg(long, default_value = "diff_prob")]
    pub metric: String,
    /// Claims CSV [default: the one the run was trained on].
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = AbsentArg::StandardizedMean)]
    pub absent: AbsentArg,
    /// Importance CSV of another model to compare top-k sets against.
    #[arg(long)]
    pub compare: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub top_k: usize,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Output directory [default: the run directory].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct HyperoptArgs {
    /// Catalog model name or family alias (rnn, rnnss, rnncrf, crf, neural-crf, lr).
    #[arg(long)]
    pub model: String,
    #[arg(long, default_value_t = 50)]
    pub trials: usize,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Claims CSV [default: <data-dir>/claims.csv].
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output directory; the search writes into a subdirectory [default: <data-dir>/hyperopt].
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 30)]
    pub max_epochs: usize,
    #[arg(long, default_value_t = 10)]
    pub patience: usize,
    #[arg(long, default_value_t = 0.3)]
    pub subset_fraction: f64,
    /// Narrow a dimension to a JSON list of candidates, e.g. `--restrict hidden=[16,32]`.
    #[arg(long, value_name = "DIM=JSON")]
    pub restrict: Vec<String>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory of `train` runs [default: <data-dir>/runs].
    #[arg(long)]
    pub runs: Option<PathBuf>,
    /// Claims CSV for the cohort table [default: <data-dir>/claims.csv].
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output directory [default: the runs directory].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Cohort characteristics next to the reference cohort.
    #[arg(long)]
    pub table1: bool,
    /// One AUC row per trained model.
    #[arg(long)]
    pub table2: bool,
    /// Test AUC per timeline-length bucket for every trained model.
    #[arg(long)]
    pub by_length: bool,
}

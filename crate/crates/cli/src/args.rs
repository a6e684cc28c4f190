use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hcdh::analysis::DEFAULT_LAMBDA_GRID;
use hcdh::model::LossMode;
use hcdh::retrieval::ApDenominator;
use hcdh::trainer::{TrainConfig, Variant};

fn defaults() -> TrainConfig {
    TrainConfig::default()
}

#[derive(Debug, Parser)]
#[command(name = "hcdh", version, about = "Hadamard codebook hashing: codebooks, training, retrieval evaluation")]
#[command(args_override_self = true, propagate_version = true)]
pub struct Cli {
    /// Flat key=value file supplying flag defaults; flags on the command line win.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Worker threads for ranking (1 keeps runs single-threaded).
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a class codebook and write it as an HCCB file.
    Codebook(CodebookArgs),
    /// Generate a Gaussian-blob dataset.
    Synth(SynthArgs),
    /// Split a labelled dataset into query, train and database sets.
    Split(SplitArgs),
    /// Train a hash network against a codebook.
    Train(TrainArgs),
    /// Encode the query and database items of a split into packed codes.
    Encode(EncodeArgs),
    /// Rank the database for every query and write mAP, PR and precision@k reports.
    Eval(EvalArgs),
    /// Train once and write bit balance, activation histogram, confusion matrix and codebook Gram diagnostics.
    Analyze(AnalyzeArgs),
    /// Train and evaluate once per λ value.
    Sweep(SweepArgs),
    /// Train and evaluate HCDH, HCDH-H and HCDH-C under identical seeds.
    Ablate(AblateArgs),
    /// Evaluate random-hyperplane codes over raw features.
    LshBaseline(LshArgs),
}

#[derive(Debug, Args)]
pub struct CodebookArgs {
    /// Code length K.
    #[arg(long, value_name = "K")]
    pub bits: usize,
    /// Number of classes C.
    #[arg(long, value_name = "C")]
    pub classes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output path; defaults to codebook_k{K}_c{C}_seed{S}.hccb in the current directory.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 8)]
    pub classes: usize,
    #[arg(long, default_value_t = 200)]
    pub per_class: usize,
    #[arg(long, default_value_t = 16)]
    pub dim: usize,
    /// Per-coordinate noise standard deviation.
    #[arg(long, default_value_t = 0.5)]
    pub spread: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Feature output (HCFS, or CSV for .csv/.txt).
    #[arg(long, value_name = "PATH")]
    pub features: PathBuf,
    /// Label output (HCLS, or CSV for .csv/.txt).
    #[arg(long, value_name = "PATH")]
    pub labels: PathBuf,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long, value_name = "PATH")]
    pub labels: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub query_per_class: usize,
    #[arg(long, default_value_t = 500)]
    pub train_per_class: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
}

/// Inputs shared by every training pipeline.
#[derive(Debug, Args, Clone)]
pub struct DataArgs {
    #[arg(long, value_name = "PATH")]
    pub features: PathBuf,
    #[arg(long, value_name = "PATH")]
    pub labels: PathBuf,
    #[arg(long, value_name = "PATH")]
    pub split: PathBuf,
    #[arg(long, value_name = "PATH")]
    pub codebook: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LossArg {
    /// Softmax cross-entropy (single-label).
    Ce,
    /// Sigmoid binary cross-entropy (multi-label).
    Bce,
}

impl From<LossArg> for LossMode {
    fn from(v: LossArg) -> Self {
        match v {
            LossArg::Ce => LossMode::CrossEntropy,
            LossArg::Bce => LossMode::BinaryCrossEntropy,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    /// Hadamard loss plus λ-weighted classification loss.
    Hcdh,
    /// Hadamard loss only.
    HcdhH,
    /// Classification loss only.
    HcdhC,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Hcdh => Variant::Full,
            VariantArg::HcdhH => Variant::HadamardOnly,
            VariantArg::HcdhC => Variant::ClassifierOnly,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DenominatorArg {
    /// min(R, number of relevant database items).
    Min,
    /// Number of relevant database items.
    Relevant,
}

impl From<DenominatorArg> for ApDenominator {
    fn from(v: DenominatorArg) -> Self {
        match v {
            DenominatorArg::Min => ApDenominator::MinCutoffRelevant,
            DenominatorArg::Relevant => ApDenominator::AllRelevant,
        }
    }
}

/// Optimisation and architecture flags.
#[derive(Debug, Args, Clone)]
pub struct HyperArgs {
    #[arg(long, default_value_t = defaults().epochs)]
    pub epochs: usize,
    #[arg(long, default_value_t = defaults().batch_size)]
    pub batch_size: usize,
    /// Base learning rate, halved every --lr-halving-period epochs.
    #[arg(long, default_value_t = defaults().base_lr)]
    pub lr: f64,
    #[arg(long, default_value_t = defaults().lr_halving_period)]
    pub lr_halving_period: usize,
    #[arg(long, default_value_t = defaults().sgd.momentum)]
    pub momentum: f64,
    #[arg(long, default_value_t = defaults().sgd.weight_decay)]
    pub weight_decay: f64,
    /// Weight of the classification loss.
    #[arg(long, default_value_t = defaults().lambda)]
    pub lambda: f64,
    #[arg(long, value_enum, default_value_t = LossArg::Ce)]
    pub loss: LossArg,
    #[arg(long, default_value_t = defaults().seed)]
    pub seed: u64,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "256")]
    pub hidden: Vec<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub hyper: HyperArgs,
    #[arg(long, value_enum, default_value_t = VariantArg::Hcdh)]
    pub variant: VariantArg,
    /// Also write the checkpoint every N epochs (0 = only at the end).
    #[arg(long, default_value_t = defaults().checkpoint_every)]
    pub checkpoint_every: usize,
    /// Continue from this checkpoint until --epochs epochs are complete.
    #[arg(long, value_name = "PATH")]
    pub resume: Option<PathBuf>,
    #[arg(long, value_name = "DIR", default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    #[arg(long, value_name = "PATH")]
    pub model: PathBuf,
    #[arg(long, value_name = "PATH")]
    pub features: PathBuf,
    #[arg(long, value_name = "PATH")]
    pub split: PathBuf,
    /// Threshold each bit at the database mean activation instead of 0.
    #[arg(long)]
    pub mean_centered: bool,
    #[arg(long, value_name = "DIR", default_value = ".")]
    pub out_dir: PathBuf,
}

/// Ranking and scoring flags.
#[derive(Debug, Args, Clone)]
pub struct ScoreArgs {
    /// Evaluate mAP@R over the top R items (default: whole database).
    #[arg(long, value_name = "R")]
    pub map_at: Option<usize>,
    #[arg(long, value_enum, default_value_t = DenominatorArg::Min)]
    pub denominator: DenominatorArg,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, value_name = "PATH")]
    pub queries: PathBuf,
    #[arg(long, value_name = "PATH")]
    pub database: PathBuf,
    #[arg(long, value_name = "PATH")]
    pub labels: PathBuf,
    #[arg(long, value_name = "PATH")]
    pub split: PathBuf,
    #[command(flatten)]
    pub score: ScoreArgs,
    #[arg(long, value_name = "DIR", default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub hyper: HyperArgs,
    #[arg(long)]
    pub mean_centered: bool,
    /// Ranks considered by the confusion matrix.
    #[arg(long, default_value_t = 100)]
    pub top_r: usize,
    /// Activation histogram bins over [-1, 1].
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
    #[command(flatten)]
    pub score: ScoreArgs,
    #[arg(long, value_name = "DIR", default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub hyper: HyperArgs,
    /// λ values, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_LAMBDA_GRID.to_vec())]
    pub lambdas: Vec<f64>,
    #[arg(long)]
    pub mean_centered: bool,
    #[command(flatten)]
    pub score: ScoreArgs,
    #[arg(long, value_name = "DIR", default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub hyper: HyperArgs,
    #[arg(long)]
    pub mean_centered: bool,
    #[command(flatten)]
    pub score: ScoreArgs,
    #[arg(long, value_name = "DIR", default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct LshArgs {
    #[arg(long, value_name = "PATH")]
    pub features: PathBuf,
    #[arg(long, value_name = "PATH")]
    pub labels: PathBuf,
    #[arg(long, value_name = "PATH")]
    pub split: PathBuf,
    /// Code length K.
    #[arg(long, value_name = "K")]
    pub bits: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub score: ScoreArgs,
    #[arg(long, value_name = "DIR", default_value = ".")]
    pub out_dir: PathBuf,
}

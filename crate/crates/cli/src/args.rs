use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "hardnet", version, about = "Train and evaluate HardNet patch descriptors")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic patch dataset as Brown-style montages.
    Synth(SynthArgs),
    /// Train a descriptor model.
    Train(TrainArgs),
    /// Compute descriptors for every patch of a dataset.
    Describe(DescribeArgs),
    /// Verification, matching or retrieval metrics.
    Eval(EvalArgs),
    /// Train one model per sampling × loss cell and report matching mAP.
    Ablate(AblateArgs),
    /// Train one model per batch size and report FPR95.
    BatchSweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Key-value generator config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Overrides `num_points` from the config.
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Model shape and training options shared by the training commands.
#[derive(Debug, Args, Clone)]
pub struct TrainFlags {
    /// Key-value training config; flags given explicitly override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub preset: Option<String>,
    /// `hardnet` or a path to an architecture text file.
    #[arg(long, default_value = "hardnet")]
    pub arch: String,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub margin: Option<f64>,
    #[arg(long)]
    pub cpr_weight: Option<f64>,
    #[arg(long)]
    pub augment: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub flags: TrainFlags,
    #[arg(long)]
    pub loss: Option<String>,
    #[arg(long)]
    pub sampling: Option<String>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Hold out this many points and keep the best-FPR95 snapshot.
    #[arg(long)]
    pub validation_points: Option<usize>,
    #[arg(long)]
    pub out_model: PathBuf,
    /// Run log path (default: `<out-model>.log`).
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DescribeArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub desc_a: Option<PathBuf>,
    #[arg(long)]
    pub desc_b: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// verify, match or retrieve.
    #[arg(long)]
    pub task: String,
    /// Distractor counts for retrieval, e.g. `10,100,1000`.
    #[arg(long)]
    pub distractors: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Report path (key-value text).
    #[arg(long)]
    pub out: PathBuf,
    /// Retrieval curve CSV (default: `<out>.csv`).
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub flags: TrainFlags,
    /// `SAMPLINGS:LOSSES`, e.g. `hardest,random:triplet_margin`. Losses may
    /// carry a margin as `contrastive@2`; a `+cpr` sampling suffix adds the
    /// channel-correlation penalty at weight 1, e.g. `random+cpr`.
    #[arg(
        long,
        default_value = "hardest,random,epoch:triplet_margin,contrastive,contrastive@2,softmin"
    )]
    pub grid: String,
    #[arg(long, default_value_t = 3)]
    pub epochs: usize,
    #[arg(long, default_value_t = 128)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 500)]
    pub held_out: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV table path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub flags: TrainFlags,
    #[arg(long, default_value = "16,64,128,512")]
    pub sizes: String,
    #[arg(long, default_value_t = 3)]
    pub epochs: usize,
    #[arg(long, default_value_t = 500)]
    pub held_out: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV path (`size,fpr95`).
    #[arg(long)]
    pub out: PathBuf,
}

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "lungnet",
    version,
    about = "Respiratory cycle anomaly classification"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct GlobalArgs {
    /// Config file of `key = value` lines.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override one config key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub sets: Vec<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Run directory to use instead of the latest one for this seed.
    #[arg(long, global = true)]
    pub run: Option<PathBuf>,
    /// Truncate the dataset (cycles for prepare/evaluate, patches for train).
    #[arg(long, global = true)]
    pub limit: Option<usize>,
    /// Worker threads (default: logical cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load recordings, extract gammatone patches and write the caches.
    Prepare {
        /// Rebuild even if the cache is up to date.
        #[arg(long)]
        force: bool,
        /// Start a new run directory.
        #[arg(long)]
        new_run: bool,
    },
    /// Train one of the models on the cached training patches.
    Train {
        #[arg(value_enum)]
        model: ModelKind,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Score the test cycles with the trained models.
    Evaluate {
        /// Restrict to these sources (default: every trained model).
        #[arg(long, value_enum)]
        source: Vec<SourceArg>,
        #[arg(long, value_enum)]
        fusion: Option<FusionArg>,
    },
    /// Score probability CSV files against the ground truth.
    Score {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        /// Manifest with the true labels (default: the run's manifest).
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long, value_enum)]
        fusion: Option<FusionArg>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelKind {
    Cdnn,
    Autoencoder,
    Mlp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SourceArg {
    Cdnn,
    Mlp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FusionArg {
    Max,
    Mean,
    Mul,
}

impl From<FusionArg> for lungnet_core::Fusion {
    fn from(f: FusionArg) -> Self {
        match f {
            FusionArg::Max => lungnet_core::Fusion::Max,
            FusionArg::Mean => lungnet_core::Fusion::Mean,
            FusionArg::Mul => lungnet_core::Fusion::Mul,
        }
    }
}

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Environment variable naming the default classifier weights.
pub const WEIGHTS_ENV: &str = "GCPID_WEIGHTS";

#[derive(Debug, Parser)]
#[command(
    name = "gcpid",
    version,
    about = "Green-channel-prior image, video and hyperspectral denoising"
)]
pub struct Cli {
    /// Worker threads; 1 runs sequentially. Defaults to all cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Denoise an image, a raw mosaic, a video or a hyperspectral cube.
    Denoise {
        #[command(subcommand)]
        kind: DenoiseKind,
    },
    /// Print the per-tile noise levels predicted by a classifier.
    Estimate(EstimateArgs),
    /// Run a desk-scale experiment and print its report.
    Experiment(ExperimentArgs),
    /// Compare two images (or two containers frame by frame).
    Metrics(MetricsArgs),
}

#[derive(Debug, Subcommand)]
pub enum DenoiseKind {
    /// 8- or 16-bit RGB image.
    Image(DenoiseArgs),
    /// Single-channel Bayer mosaic, denoised in packed form.
    Raw {
        #[command(flatten)]
        common: DenoiseArgs,
        #[command(flatten)]
        raw: RawArgs,
    },
    /// Frame sequence: a .gcpt container or a directory of images.
    Video(DenoiseArgs),
    /// Hyperspectral cube stored as a .gcpt container.
    Hsi(DenoiseArgs),
}

#[derive(Debug, Args)]
pub struct DenoiseArgs {
    pub input: PathBuf,
    pub output: PathBuf,

    /// Noise standard deviation on the 8-bit scale.
    #[arg(long, conflicts_with = "weights")]
    pub sigma: Option<f64>,

    /// Classifier weights for per-tile noise estimation. Falls back to
    /// the GCPID_WEIGHTS environment variable when neither this nor
    /// --sigma is given.
    #[arg(long)]
    pub weights: Option<PathBuf>,

    /// Clean reference; adds PSNR and SSIM to the report.
    #[arg(long = "ref")]
    pub reference: Option<PathBuf>,

    /// Also write the JSON report to this file.
    #[arg(long)]
    pub report: Option<PathBuf>,

    /// Bit depth of image outputs.
    #[arg(long, default_value_t = 8, value_parser = parse_depth)]
    pub depth: u32,

    /// Frames per temporal window (video only).
    #[arg(long, default_value_t = 3)]
    pub frames: usize,

    #[command(flatten)]
    pub tuning: Tuning,
}

#[derive(Debug, Args, Clone, Default)]
pub struct Tuning {
    /// Patch size.
    #[arg(long)]
    pub ps: Option<usize>,
    /// Search window side.
    #[arg(long)]
    pub window: Option<usize>,
    /// Patches per group.
    #[arg(long)]
    pub k: Option<usize>,
    /// Green-dominance ratio for the search branch.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Threshold multiplier.
    #[arg(long)]
    pub tau_mult: Option<f64>,
    /// Reference stride.
    #[arg(long)]
    pub stride: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RawArgs {
    /// Color filter array layout.
    #[arg(long, default_value = "rggb")]
    pub layout: String,
    /// Black level in stored units.
    #[arg(long, default_value_t = 0.0)]
    pub black: f64,
    /// White level in stored units; defaults to the full range of the file.
    #[arg(long)]
    pub white: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    pub input: PathBuf,
    /// Classifier weights; falls back to GCPID_WEIGHTS.
    #[arg(long)]
    pub weights: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// success-rate, tau-sweep, identity or scaling.
    pub name: String,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Random references per seed (success-rate).
    #[arg(long, default_value_t = 1000)]
    pub refs: usize,
    /// Also write the JSON report to this file.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub tuning: Tuning,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    pub reference: PathBuf,
    pub test: PathBuf,
}

fn parse_depth(s: &str) -> Result<u32, String> {
    match s {
        "8" => Ok(8),
        "16" => Ok(16),
        _ => Err(format!("bit depth must be 8 or 16, got {s}")),
    }
}

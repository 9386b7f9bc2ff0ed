//! Command-line syntax.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use promptpainter::superres::SuperresConfig;
use promptpainter::LevelConfig;

use crate::config::{parse_levels, parse_superres, Overrides};

#[derive(Debug, Parser)]
#[command(
    name = "promptpainter",
    version,
    about = "Stylize images towards text and image prompts"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimize and write output.png and manifest.json.
    Run(RunArgs),
    /// Same as `run --bench`: also writes per-stage timings to bench.json.
    Bench(RunArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// JSON config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Content image (PNG) to start from instead of a random latent.
    #[arg(long)]
    pub content: Option<PathBuf>,
    /// Style text prompt. Repeatable.
    #[arg(long = "text")]
    pub texts: Vec<String>,
    /// Style image (PNG). Repeatable.
    #[arg(long = "style-image")]
    pub style_images: Vec<PathBuf>,
    /// Style weight, one per style: texts first, then images.
    #[arg(long = "style-weight")]
    pub style_weights: Vec<f64>,
    /// Final optimization resolution for the default schedule.
    #[arg(long)]
    pub size: Option<usize>,
    /// Explicit schedule, e.g. `256:300:0.1,512:200:0.1`.
    #[arg(long, value_parser = levels_arg)]
    pub levels: Option<Schedule>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Write snapshots/level{L}_iter{I}.png after every step.
    #[arg(long)]
    pub save_intermediates: bool,
    /// Encoder adapter id.
    #[arg(long)]
    pub encoder: Option<String>,
    /// Generator adapter id.
    #[arg(long)]
    pub generator: Option<String>,
    /// `off`, a factor (`2`, `4`) or `adapter:factor`.
    #[arg(long, value_parser = superres_arg)]
    pub superres: Option<SuperresConfig>,
    /// Also write bench.json.
    #[arg(long)]
    pub bench: bool,
}

/// A whole `--levels` value. Wrapped so clap does not read `Vec` as a
/// repeated flag.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule(pub Vec<LevelConfig>);

fn levels_arg(s: &str) -> Result<Schedule, String> {
    parse_levels(s).map(Schedule).map_err(|e| e.to_string())
}

fn superres_arg(s: &str) -> Result<SuperresConfig, String> {
    parse_superres(s).map_err(|e| e.to_string())
}

impl From<RunArgs> for Overrides {
    fn from(a: RunArgs) -> Self {
        Overrides {
            config: a.config,
            content: a.content,
            texts: a.texts,
            style_images: a.style_images,
            style_weights: a.style_weights,
            size: a.size,
            levels: a.levels.map(|s| s.0),
            seed: a.seed,
            output_dir: a.output_dir,
            save_intermediates: a.save_intermediates,
            encoder: a.encoder,
            generator: a.generator,
            superres: a.superres,
            bench: a.bench,
        }
    }
}

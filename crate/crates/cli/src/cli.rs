//! Argument definitions for the `tsdh` binary.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "tsdh",
    version,
    about = "Diffusion-based time-series imputation with hallucination detection"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Construct a windowed relational dataset from raw series.
    BuildDataset(BuildDatasetArgs),
    /// Train a diffusion model on a windows file.
    Train(TrainArgs),
    /// Impute prompts for a split of a dataset.
    Impute(ImputeArgs),
    /// Score a response CSV with the combined-error metric.
    Score(ScoreArgs),
    /// Fit low/medium/high thresholds on training-set CE values.
    Calibrate(CalibrateArgs),
    /// Classify CE values against a calibration.
    Classify(ClassifyArgs),
    /// Sample-N argmin-CE filtering.
    Mitigate(MitigateArgs),
    /// Full evaluation: relational-error tables, detection, and mitigation.
    Benchmark(BenchmarkArgs),
    /// Combined-error heatmap over a 2D grid.
    Heatmap(HeatmapArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitSel {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskSel {
    Oc,
    Uc,
    Fc,
    All,
}

#[derive(Debug, Args)]
pub struct BuildDatasetArgs {
    /// Dataset recipe: recl, rwth, rtraffic, rillness, rett, or synthetic2d.
    #[arg(long)]
    pub dataset: String,
    /// Raw source CSV with a header row (recipe datasets).
    #[arg(long)]
    pub source: Option<PathBuf>,
    /// Header name of the first source column.
    #[arg(long)]
    pub col_a: Option<String>,
    /// Header name of the second source column.
    #[arg(long)]
    pub col_b: Option<String>,
    /// Window stride over source rows.
    #[arg(long, default_value_t = tsdh_core::data::WINDOW_LEN)]
    pub stride: usize,
    /// Point count for synthetic2d.
    #[arg(long, default_value_t = 500)]
    pub n_points: usize,
    /// Observation noise for synthetic2d.
    #[arg(long, default_value_t = 0.05)]
    pub noise_std: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Canonical windows CSV.
    #[arg(long)]
    pub windows: PathBuf,
    /// Dataset metadata JSON.
    #[arg(long)]
    pub meta: PathBuf,
    /// Run-config JSON; explicit flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub t_steps: Option<usize>,
    #[arg(long)]
    pub beta_start: Option<f64>,
    #[arg(long)]
    pub beta_end: Option<f64>,
    /// Comma-separated hidden-layer widths.
    #[arg(long)]
    pub hidden: Option<String>,
    #[arg(long)]
    pub time_embed_dim: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub val_interval: Option<usize>,
    #[arg(long)]
    pub max_lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Checkpoint path; defaults to <out-dir>/model.ckpt.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ImputeArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub windows: PathBuf,
    #[arg(long)]
    pub meta: PathBuf,
    #[arg(long, value_enum, default_value_t = TaskSel::All)]
    pub task: TaskSel,
    #[arg(long, value_enum, default_value_t = SplitSel::Test)]
    pub split: SplitSel,
    #[arg(long)]
    pub max_windows: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Response CSV (impute output or external responses).
    #[arg(long)]
    pub responses: PathBuf,
    /// Dataset metadata JSON; enables the relational-error column.
    #[arg(long)]
    pub meta: Option<PathBuf>,
    /// Ground-truth windows CSV; enables the prompt-error column.
    #[arg(long)]
    pub windows: Option<PathBuf>,
    /// Also compute the conditioned-trajectory metric (slow).
    #[arg(long)]
    pub full_metrics: bool,
    /// Noise draws averaged in the combined-error corruption.
    #[arg(long, default_value_t = 1)]
    pub ce_draws: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub windows: PathBuf,
    #[arg(long)]
    pub meta: PathBuf,
    /// Cap on the number of training windows used.
    #[arg(long)]
    pub max_windows: Option<usize>,
    /// Noise draws averaged in the combined-error corruption.
    #[arg(long, default_value_t = 1)]
    pub ce_draws: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    /// Calibration JSON from `calibrate`.
    #[arg(long)]
    pub calibration: PathBuf,
    /// Single CE value; the level is printed to stdout.
    #[arg(long)]
    pub ce: Option<f64>,
    /// Scored CSV from `score`; a level column is appended.
    #[arg(long)]
    pub scored: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MitigateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub windows: Option<PathBuf>,
    #[arg(long)]
    pub meta: Option<PathBuf>,
    /// External response CSV; selection runs over its sample groups instead
    /// of drawing fresh samples.
    #[arg(long)]
    pub external: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = TaskSel::All)]
    pub task: TaskSel,
    #[arg(long, value_enum, default_value_t = SplitSel::Test)]
    pub split: SplitSel,
    /// Samples drawn per prompt.
    #[arg(long, default_value_t = 10)]
    pub n: usize,
    #[arg(long)]
    pub max_prompts: Option<usize>,
    /// Noise draws averaged in the combined-error corruption.
    #[arg(long, default_value_t = 1)]
    pub ce_draws: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub windows: PathBuf,
    #[arg(long)]
    pub meta: PathBuf,
    /// External response CSVs to include in the comparison.
    #[arg(long)]
    pub external: Vec<PathBuf>,
    /// Mitigation samples per prompt.
    #[arg(long, default_value_t = 10)]
    pub n: usize,
    /// Cap on test prompts per task.
    #[arg(long)]
    pub max_prompts: Option<usize>,
    /// Cap on calibration windows.
    #[arg(long)]
    pub calib_windows: Option<usize>,
    /// Noise draws averaged in the combined-error corruption.
    #[arg(long, default_value_t = 1)]
    pub ce_draws: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct HeatmapArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value_t = 64)]
    pub nx: usize,
    #[arg(long, default_value_t = 64)]
    pub ny: usize,
    #[arg(long, default_value_t = -1.5)]
    pub x_min: f64,
    #[arg(long, default_value_t = 1.5)]
    pub x_max: f64,
    #[arg(long, default_value_t = -1.5)]
    pub y_min: f64,
    #[arg(long, default_value_t = 1.5)]
    pub y_max: f64,
    /// Noise draws averaged in the combined-error corruption.
    #[arg(long, default_value_t = 1)]
    pub ce_draws: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_csv: PathBuf,
    #[arg(long)]
    pub out_png: PathBuf,
}

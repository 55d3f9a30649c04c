use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use opmode_core::pca::ComponentPolicy;
use opmode_core::pipeline::PipelineConfig;
use opmode_core::time::Duration;

#[derive(Debug, Parser)]
#[command(name = "opmode", version, about = "Discover, track and explain plant operation modes")]
pub struct Cli {
    /// More log output on stderr (repeatable)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    /// Only log errors
    #[arg(short, long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Offline stage: fit scaler, PCA, DBSCAN and explanations
    Fit(FitArgs),
    /// Online stage: assign new windows to an existing model
    Assign(AssignArgs),
    /// Full rebuild on the extended history, with a mode migration report
    Update(UpdateArgs),
    /// Print stored variable rankings
    Explain(ExplainArgs),
    /// Sorted k-distance curve of the model's projected samples
    Kdist(KdistArgs),
    /// Eigenvalues and cumulative explained variance
    Scree(ScreeArgs),
    /// Generate a synthetic plant with planted regimes
    Synth(SynthArgs),
    /// Render a JSON report into per-mode ranking tables
    Report(ReportArgs),
}

/// Pipeline settings; flags win over the config file, which wins over defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// TOML file with pipeline settings
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Resampling window, e.g. 12h, 24h, 6h
    #[arg(long)]
    pub window: Option<Duration>,
    /// Fixed DBSCAN radius (default: k-distance knee)
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Principal components: elbow, variance:<ratio>, fixed:<k> or a bare integer
    #[arg(long)]
    pub k: Option<ComponentPolicy>,
    #[arg(long)]
    pub min_points: Option<usize>,
    /// Neighbour rank for the k-distance curve (default: min-points)
    #[arg(long)]
    pub k_neighbors: Option<usize>,
    /// Drop variables whose missing fraction exceeds this
    #[arg(long)]
    pub missing_threshold: Option<f64>,
    /// Variables kept per ranking
    #[arg(long)]
    pub top: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Variable to leave out (repeatable)
    #[arg(long)]
    pub exclude: Vec<String>,
}

impl Overrides {
    pub fn apply(&self, mut c: PipelineConfig) -> PipelineConfig {
        if let Some(w) = self.window {
            c.window = w;
            c.anchor_offset = None;
        }
        if let Some(e) = self.epsilon {
            c.epsilon = Some(e);
        }
        if let Some(k) = self.k {
            c.components = k;
        }
        if let Some(m) = self.min_points {
            c.min_points = m;
        }
        if let Some(k) = self.k_neighbors {
            c.k_neighbors = Some(k);
        }
        if let Some(t) = self.missing_threshold {
            c.missing_threshold = t;
        }
        if let Some(t) = self.top {
            c.top = t;
        }
        if let Some(s) = self.seed {
            c.seed = s;
        }
        c.exclude.extend(self.exclude.iter().cloned());
        c
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Raw CSV: timestamp column then one column per variable
    #[arg(long)]
    pub input: PathBuf,
    /// Two-column CSV mapping variable names (or `PREFIX*`) to units
    #[arg(long)]
    pub unit_map: Option<PathBuf>,
    /// Where to write the model bundle
    #[arg(long)]
    pub model: PathBuf,
    /// Directory for the report and plot tables
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Args)]
pub struct AssignArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub unit_map: Option<PathBuf>,
    /// Directory for events and the updated model
    #[arg(long)]
    pub out: PathBuf,
    /// Explain every sample, not only new and merged modes
    #[arg(long)]
    pub explain_all: bool,
}

#[derive(Debug, Args)]
pub struct UpdateArgs {
    /// Model being replaced
    #[arg(long)]
    pub model: PathBuf,
    /// Full history: the original span plus the new data
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub unit_map: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Only this mode
    #[arg(long, conflicts_with = "components")]
    pub mode: Option<usize>,
    /// Only the principal-component ranking
    #[arg(long)]
    pub components: bool,
    /// Truncate rankings to this many variables
    #[arg(long)]
    pub top: Option<usize>,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
    /// Output file (default: stdout)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct KdistArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Neighbour rank (default: the model's min_points)
    #[arg(long)]
    pub neighbors: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScreeArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// 453 variables, one-minute sampling, a full year (about 2.4 GB of CSV)
    Full,
    /// 25 variables, ten-minute sampling, 60 days
    Small,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value = "small")]
    pub preset: Preset,
    /// TOML plant description, used instead of the preset
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory for data.csv, labels.csv, units.csv and regimes.json
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// report.json from fit/update, or events.json from assign
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

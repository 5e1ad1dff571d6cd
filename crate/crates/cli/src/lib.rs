//! `cgtopo` command line: per-pair analysis, graph export, dataset
//! evaluation, loss computation and benchmarking.
//!
//! Exit codes: 0 success, 2 unreadable or malformed input (including bad
//! flags), 3 raster dimension mismatch, 4 unmatched files in `evaluate`,
//! 1 anything else.

pub mod bench;
pub mod commands;
pub mod output;

use std::fmt;
use std::path::PathBuf;

use cgtopo::{Aggregation, Error, GridParams, LossConfig, ThresholdPolicy};
use clap::builder::{PossibleValuesParser, TypedValueParser};
use clap::{Args, Parser, Subcommand, ValueEnum};

pub const EXIT_OTHER: i32 = 1;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_DIMENSIONS: i32 = 3;
pub const EXIT_UNMATCHED: i32 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn new(code: i32, message: impl Into<String>) -> Self {
        CliError {
            code,
            message: message.into(),
        }
    }

    pub fn other(message: impl Into<String>) -> Self {
        CliError::new(EXIT_OTHER, message)
    }

    /// Error while reading an input file.
    pub fn input(path: &std::path::Path, err: Error) -> Self {
        let code = match err {
            Error::DimensionMismatch { .. } => EXIT_DIMENSIONS,
            _ => EXIT_PARSE,
        };
        CliError::new(code, format!("{}: {err}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(err: Error) -> Self {
        let code = match err {
            Error::DimensionMismatch { .. } => EXIT_DIMENSIONS,
            Error::InvalidGridParams(_)
            | Error::InvalidThresholdPolicy(_)
            | Error::InvalidProbability(_)
            | Error::ChannelMismatch(_)
            | Error::Parse(_)
            | Error::Image(_) => EXIT_PARSE,
            _ => EXIT_OTHER,
        };
        CliError::new(code, err.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "cgtopo",
    version,
    about = "Topologically critical regions, component-graph loss and DIU for 2D segmentations"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Analyze one prediction/label pair: report, graph, class map and support mask.
    Analyze(AnalyzeArgs),
    /// Print or write the combined component graph of one pair.
    Graph(GraphArgs),
    /// Metrics for every same-named pair of rasters in two directories.
    Evaluate(EvaluateArgs),
    /// Component-graph loss of a TGF1 probability map against a label raster.
    Loss(LossArgs),
    /// Time the full loss pipeline on synthetic pairs.
    Bench(BenchArgs),
}

#[derive(Args, Debug, Clone, Copy)]
pub struct GridOpts {
    /// Refined cells per pixel side.
    #[arg(long = "refine-k", default_value_t = 5)]
    pub refine_k: usize,
    /// Prediction dilation radius, in refined cells.
    #[arg(long, default_value_t = 1)]
    pub rp: usize,
    /// Ground-truth dilation radius, in refined cells.
    #[arg(long, default_value_t = 2)]
    pub rg: usize,
}

impl GridOpts {
    pub fn params(&self) -> Result<GridParams, CliError> {
        let p = GridParams {
            refine_k: self.refine_k,
            r_pred: self.rp,
            r_gt: self.rg,
        };
        p.validate()?;
        Ok(p)
    }

    /// Grid used for DIU: the raw rasters when `no_thicken` is set.
    pub fn diu_params(&self, no_thicken: bool) -> Result<GridParams, CliError> {
        if no_thicken {
            Ok(GridParams::raw())
        } else {
            self.params()
        }
    }
}

fn aggregation_parser() -> impl TypedValueParser<Value = Aggregation> {
    PossibleValuesParser::new(Aggregation::ALL.map(Aggregation::as_str))
        .map(|s| s.parse::<Aggregation>().expect("restricted to known names"))
}

#[derive(Args, Debug, Clone, Copy)]
pub struct ScoreOpts {
    /// Loss weight.
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    /// Per-region aggregation of predicted-class scores.
    #[arg(long, default_value = "mean", value_parser = aggregation_parser())]
    pub agg: Aggregation,
}

#[derive(Args, Debug, Clone, Copy)]
pub struct ThresholdOpts {
    /// Standard deviation of the Gaussian threshold shift around 0.5.
    #[arg(long, default_value_t = 0.0)]
    pub sigma: f64,
    /// Use the Otsu threshold of each map instead of 0.5.
    #[arg(long, conflicts_with = "sigma")]
    pub otsu: bool,
    /// Seed of the threshold RNG.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl ThresholdOpts {
    pub fn policy(&self) -> ThresholdPolicy {
        ThresholdPolicy::from_options(self.sigma, self.otsu, self.seed)
    }
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    /// Binary prediction raster (PGM or PNG, nonzero = foreground).
    pub pred: PathBuf,
    /// Binary label raster.
    pub label: PathBuf,
    /// Optional single-channel TGF1 scores for the loss; defaults to the
    /// prediction itself (scores 0 and 1).
    #[arg(long)]
    pub prob: Option<PathBuf>,
    #[command(flatten)]
    pub grid: GridOpts,
    #[command(flatten)]
    pub score: ScoreOpts,
    /// Compute DIU on the raw rasters instead of the thickened overlay.
    #[arg(long)]
    pub no_thicken: bool,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum GraphFormat {
    Dot,
    Json,
}

#[derive(Args, Debug)]
pub struct GraphArgs {
    /// Binary prediction raster.
    pub pred: PathBuf,
    /// Binary label raster.
    pub label: PathBuf,
    #[command(flatten)]
    pub grid: GridOpts,
    /// Graph serialization.
    #[arg(long, value_enum, default_value = "dot")]
    pub format: GraphFormat,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Directory of prediction rasters.
    pub pred_dir: PathBuf,
    /// Directory of label rasters with the same file names.
    pub label_dir: PathBuf,
    #[command(flatten)]
    pub grid: GridOpts,
    /// Compute DIU on the raw rasters instead of the thickened overlay.
    #[arg(long)]
    pub no_thicken: bool,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    /// Output directory for metrics.csv and aggregate.json.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct LossArgs {
    /// TGF1 probability map (one channel, or one per class).
    pub prob: PathBuf,
    /// Label raster: foreground mask for one channel, class indices otherwise.
    pub label: PathBuf,
    #[command(flatten)]
    pub grid: GridOpts,
    #[command(flatten)]
    pub score: ScoreOpts,
    #[command(flatten)]
    pub threshold: ThresholdOpts,
    /// Worker threads for per-class problems (0 = all cores).
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    /// Output directory for loss.json and support.pgm.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Square image sizes, ascending.
    #[arg(long, value_delimiter = ',', default_values_t = [128usize, 256, 512, 1024])]
    pub sizes: Vec<usize>,
    /// Timed runs per size; the median is reported.
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    /// Seed of the synthetic data.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub grid: GridOpts,
    /// Output directory for bench.csv.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

pub fn loss_config(
    grid: &GridOpts,
    score: &ScoreOpts,
    threshold: Option<&ThresholdOpts>,
) -> Result<LossConfig, CliError> {
    let cfg = LossConfig {
        alpha: score.alpha,
        aggregation: score.agg,
        threshold: threshold.map(ThresholdOpts::policy).unwrap_or_default(),
        grid: grid.params()?,
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Analyze(a) => commands::cmd_analyze(&a),
        Command::Graph(a) => commands::cmd_graph(&a),
        Command::Evaluate(a) => commands::cmd_evaluate(&a),
        Command::Loss(a) => commands::cmd_loss(&a),
        Command::Bench(a) => commands::cmd_bench(&a),
    }
}

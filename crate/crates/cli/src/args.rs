use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use demogp::data_io::{ColumnSelector, InputFormat};
use demogp::demography::SurfaceKind;
use demogp::kernels::KernelFamily;
use demogp::FitConfig;

#[derive(Debug, Parser)]
#[command(name = "demogp", version, about = "Per-age Gaussian process forecasts of mortality and fertility")]
pub struct Cli {
    /// Emit log records as JSON lines on stderr.
    #[arg(long, global = true)]
    pub json_logs: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the models and write them with a per-age summary.
    Fit(FitArgs),
    /// Forecast age curves for target years.
    Forecast(ForecastArgs),
    /// Rolling-window RMSE comparison.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelId {
    Gpr,
    Lc,
}

impl ModelId {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelId::Gpr => "gpr",
            ModelId::Lc => "lc",
        }
    }
}

#[derive(Debug, Args)]
pub struct Common {
    /// Rate table: HMD/HFD text or `year,age,rate` CSV.
    #[arg(long)]
    pub input: PathBuf,

    #[arg(long, default_value = "mortality", value_parser = parse_kind)]
    pub kind: SurfaceKind,

    /// Input format; detected from the first line when omitted.
    #[arg(long, value_parser = parse_format)]
    pub format: Option<InputFormat>,

    /// Rate column of an HMD/HFD table: `auto`, a header name or a 0-based index.
    #[arg(long, default_value = "auto", value_parser = parse_column)]
    pub column: ColumnSelector,

    #[arg(long, value_delimiter = ',', default_value = "gpr")]
    pub model: Vec<ModelId>,

    /// Spline knots.
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u32).range(2..))]
    pub knots: u32,

    /// Spectral mixture components.
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u32).range(1..))]
    pub mixtures: u32,

    #[arg(long, default_value = "sm", value_parser = parse_family)]
    pub kernel: KernelFamily,

    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u32).range(1..))]
    pub restarts: u32,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Ignore observations after this year.
    #[arg(long)]
    pub train_end: Option<i32>,

    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

impl Common {
    pub fn fit_config(&self) -> FitConfig {
        FitConfig {
            family: self.kernel,
            mixtures: self.mixtures as usize,
            knots: self.knots as usize,
            restarts: self.restarts as usize,
            seed: self.seed,
            ..FitConfig::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct ForecastArgs {
    #[command(flatten)]
    pub common: Common,

    /// Target years.
    #[arg(long, value_delimiter = ',', required = true)]
    pub year: Vec<i32>,

    /// Reuse a GPR surface model written by `fit` instead of refitting.
    #[arg(long)]
    pub model_file: Option<PathBuf>,

    /// Also draw each curve as SVG.
    #[arg(long)]
    pub svg: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: Common,

    #[arg(long, value_delimiter = ',', default_value = "5,10,15,20", value_parser = clap::value_parser!(u32).range(1..))]
    pub horizons: Vec<u32>,

    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u32).range(1..))]
    pub windows: u32,

    /// Training end of the first window; by default the latest start that
    /// fits every window and horizon.
    #[arg(long)]
    pub window_start: Option<i32>,

    /// Dataset label in the report; defaults to the input file stem.
    #[arg(long)]
    pub dataset: Option<String>,
}

fn parse_kind(s: &str) -> Result<SurfaceKind, String> {
    s.parse::<SurfaceKind>().map_err(|e| e.to_string())
}

fn parse_format(s: &str) -> Result<InputFormat, String> {
    s.parse::<InputFormat>().map_err(|e| e.to_string())
}

fn parse_column(s: &str) -> Result<ColumnSelector, String> {
    s.parse::<ColumnSelector>().map_err(|e| e.to_string())
}

fn parse_family(s: &str) -> Result<KernelFamily, String> {
    s.parse::<KernelFamily>().map_err(|e| e.to_string())
}

mod commands;
mod report;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use mixq::conv::Variant;
use mixq::cost::CostParams;
use mixq::search::Strategy;
use mixq::simd::SimdShape;
use mixq::Error;

pub use report::RunReport;

/// Sub-byte packed convolution on an emulated SIMD unit.
#[derive(Debug, Parser)]
#[command(name = "mixq", version)]
pub struct Cli {
    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Table, global = true)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one packed convolution and check it against the exact result.
    Conv(ConvArgs),
    /// Count-model comparison against unpacked baselines over a bitwidth grid.
    Bench(BenchArgs),
    /// Fit the cost weights to measured costs.
    Calibrate(CalibrateArgs),
    /// Mixed-precision bitwidth search over a network.
    Search(SearchArgs),
    /// Show the plan chosen for a bitwidth pair and its predicted counts.
    Plan(PlanArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CostArgs {
    /// Weight of one SIMD arithmetic instruction; defaults are uncalibrated.
    #[arg(long, requires = "beta")]
    pub alpha: Option<f64>,
    /// Weight of one bit-manipulation instruction.
    #[arg(long, requires = "alpha")]
    pub beta: Option<f64>,
}

impl CostArgs {
    pub fn params(&self) -> Result<CostParams, Error> {
        match (self.alpha, self.beta) {
            (Some(a), Some(b)) => CostParams::new(a, b),
            _ => Ok(CostParams::default()),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ConvArgs {
    #[arg(long)]
    pub seq_bits: u32,
    #[arg(long)]
    pub ker_bits: u32,
    /// Sequence length for random inputs.
    #[arg(long, default_value_t = 64)]
    pub len: usize,
    /// Kernel length for random inputs.
    #[arg(long, default_value_t = 3)]
    pub kernel_len: usize,
    /// JSON file `{"sequence": [...], "kernel": [...]}` instead of random inputs.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, value_parser = parse_variant, default_value = "naive")]
    pub variant: Variant,
    /// Fix the SIMD shape, e.g. `128x32`; chosen by cost otherwise.
    #[arg(long, value_parser = parse_shape)]
    pub shape: Option<SimdShape>,
    /// Check every extracted field against a wide-integer product.
    #[arg(long)]
    pub validate: bool,
    /// Override the slot width to probe the guard-bit bound. The plan is
    /// run even when illegal, with field checking on.
    #[arg(long)]
    pub slot_bits: Option<u32>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub cost: CostArgs,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    /// Sequence (activation) bitwidths.
    #[arg(long, value_delimiter = ',', default_values_t = [2, 3, 4, 5, 6, 7, 8])]
    pub s_bits: Vec<u32>,
    /// Kernel (weight) bitwidths.
    #[arg(long, value_delimiter = ',', default_values_t = [2, 3, 4, 5, 6, 7, 8])]
    pub k_bits: Vec<u32>,
    #[arg(long, value_delimiter = ',', value_parser = parse_variant, default_values = ["naive", "reordered"])]
    pub variants: Vec<Variant>,
    /// Register width shared by the packed kernel and the baselines.
    #[arg(long, default_value_t = 32)]
    pub register_bits: u32,
    #[arg(long, default_value_t = 256)]
    pub len: usize,
    #[arg(long, default_value_t = 3)]
    pub kernel_len: usize,
    /// Write the CSV here as well.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub cost: CostArgs,
}

#[derive(Debug, Clone, Args)]
pub struct CalibrateArgs {
    /// CSV with header `c_sisd,c_simd,c_bit,cost`.
    pub csv: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SearchArgs {
    #[arg(long)]
    pub net: PathBuf,
    #[arg(long)]
    pub table: PathBuf,
    #[arg(long, default_value_t = mixq::search::DEFAULT_LAMBDA)]
    pub lambda: f64,
    #[arg(long)]
    pub flash_bytes: Option<u64>,
    #[arg(long)]
    pub peak_bytes: Option<u64>,
    #[arg(long, default_value_t = mixq::search::DEFAULT_BEAM_WIDTH)]
    pub beam_width: usize,
    #[arg(long, value_enum, default_value_t = StrategyArg::Auto)]
    pub strategy: StrategyArg,
    #[command(flatten)]
    pub cost: CostArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    Auto,
    Exhaustive,
    Beam,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Auto => Strategy::Auto,
            StrategyArg::Exhaustive => Strategy::Exhaustive,
            StrategyArg::Beam => Strategy::Beam,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct PlanArgs {
    #[arg(long)]
    pub seq_bits: u32,
    #[arg(long)]
    pub ker_bits: u32,
    #[arg(long, default_value_t = 64)]
    pub len: usize,
    #[arg(long, default_value_t = 3)]
    pub kernel_len: usize,
    /// Restrict to one shape.
    #[arg(long, value_parser = parse_shape)]
    pub shape: Option<SimdShape>,
    /// Restrict to one kernel.
    #[arg(long, value_parser = parse_variant)]
    pub variant: Option<Variant>,
    #[command(flatten)]
    pub cost: CostArgs,
}

fn parse_shape(s: &str) -> Result<SimdShape, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Outcome of a command: the report plus whether verification passed.
pub struct Outcome {
    pub report: RunReport,
    pub verified: bool,
}

pub fn run(cli: &Cli, argv: Vec<String>) -> Result<Outcome, Error> {
    match &cli.command {
        Command::Conv(a) => commands::conv(a, argv),
        Command::Bench(a) => commands::bench(a, argv),
        Command::Calibrate(a) => commands::calibrate(a, argv),
        Command::Search(a) => commands::search(a, argv),
        Command::Plan(a) => commands::plan(a, argv),
    }
}

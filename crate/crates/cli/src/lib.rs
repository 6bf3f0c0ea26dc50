//! Experiment harness around the slicing simulator: expert training, case
//! comparison matrices, sweeps and CSV outputs.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use ranslice_core::engine::Case;
use ranslice_core::TransferMode;

pub mod commands;
pub mod metrics;

/// Validation problems exit with code 1, runtime failures with code 2.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    UrllcLoad,
    MecCapacity,
}

fn parse_sweep(s: &str) -> Result<(SweepAxis, Vec<f64>), String> {
    let (axis, values) = s
        .split_once('=')
        .ok_or_else(|| format!("expected AXIS=V1,V2,.. got `{s}`"))?;
    let axis = match axis.trim() {
        "urllc_load" => SweepAxis::UrllcLoad,
        "mec_capacity" => SweepAxis::MecCapacity,
        other => return Err(format!("unknown sweep axis `{other}` (urllc_load|mec_capacity)")),
    };
    let values = values
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("bad sweep value `{t}`: {e}")))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((axis, values))
}

fn parse_transfer_mode(s: &str) -> Result<TransferMode, String> {
    match s {
        "additive" => Ok(TransferMode::Additive),
        "init-only" => Ok(TransferMode::InitOnly),
        other => Err(format!("unknown transfer mode `{other}` (additive|init-only)")),
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "ranslice",
    version,
    about = "Discrete-TTI RAN slicing simulator with tabular RL allocators"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the radio-only expert and write one Q-table per cell.
    TrainExpert(TrainExpertArgs),
    /// Run one case and write its metric CSVs.
    Run(RunArgs),
    /// Run a (case x seed x sweep) matrix and write comparison CSVs.
    Compare(CompareArgs),
    /// Reduce a delay-sample CSV to an ECDF.
    Ecdf(EcdfArgs),
}

#[derive(Debug, Args)]
pub struct TrainExpertArgs {
    /// Scenario file; defaults when omitted.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Comma-separated seeds; one table set is trained per seed.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub seeds: Vec<u64>,
    #[arg(long, default_value_t = 50_000)]
    pub ttis: u64,
    /// Output directory for `seed<S>/expert_bs<i>.qt` and manifests.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Which allocator to run: expert, ktra or qlra.
    #[arg(long)]
    pub case: Case,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub seeds: Vec<u64>,
    #[arg(long, default_value_t = 50_000)]
    pub ttis: u64,
    /// Directory of trained expert tables (required for ktra).
    #[arg(long)]
    pub expert_dir: Option<PathBuf>,
    #[arg(long, value_parser = parse_transfer_mode, default_value = "additive")]
    pub transfer_mode: TransferMode,
    #[arg(long)]
    pub out: PathBuf,
    /// Recompute the summary through an independent path and compare.
    #[arg(long)]
    pub verify: bool,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Comma-separated case set, e.g. expert,ktra,qlra.
    #[arg(long, value_delimiter = ',', default_value = "expert,ktra,qlra")]
    pub cases: Vec<Case>,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub seeds: Vec<u64>,
    #[arg(long, default_value_t = 50_000)]
    pub ttis: u64,
    /// Sweep axis and values, e.g. urllc_load=1e6,2e6,3e6,4e6
    /// or mec_capacity=1e9,2e9,3e9,4e9.
    #[arg(long, value_parser = parse_sweep)]
    pub sweep: Option<(SweepAxis, Vec<f64>)>,
    #[arg(long)]
    pub expert_dir: Option<PathBuf>,
    #[arg(long, value_parser = parse_transfer_mode, default_value = "additive")]
    pub transfer_mode: TransferMode,
    #[arg(long)]
    pub out: PathBuf,
    /// Recompute every summary row through an independent path and compare.
    #[arg(long)]
    pub verify: bool,
}

#[derive(Debug, Args)]
pub struct EcdfArgs {
    /// CSV with a `delay_ms` column (e.g. urllc_delay_samples.csv).
    pub samples: PathBuf,
    /// Number of ECDF points to keep.
    #[arg(long, default_value_t = 100)]
    pub points: usize,
    #[arg(long)]
    pub out: PathBuf,
}

impl Command {
    pub fn execute(&self) -> Result<(), CliError> {
        match self {
            Command::TrainExpert(args) => commands::train_expert(args),
            Command::Run(args) => commands::run(args).map(|_| ()),
            Command::Compare(args) => commands::compare(args).map(|_| ()),
            Command::Ecdf(args) => commands::ecdf(args),
        }
    }
}

//! Command-line flags.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use tailrate_core::pipeline::{EpsilonReading, FitUnits};
use tailrate_core::preprocess::{GroupLabel, DEFAULT_LEVEL_DBM, DEFAULT_RUN_LENGTH, DEFAULT_SAMPLE_PERIOD_MS, DEFAULT_WINDOW};
use tailrate_core::rate::DEFAULT_EPSILON;
use tailrate_core::synth::Profile;
use tailrate_core::threshold::DEFAULT_PLATEAU_WINDOW;
use tailrate_core::{ResampleMode, SpreadDivisor};

#[derive(Debug, Parser)]
#[command(name = "tailrate", version, about = "Lower-tail channel modelling and ultra-reliable rate selection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic `t_ms,power_dbm` trace.
    Simulate(SimulateArgs),
    /// Run grouping, threshold, fit, intervals and rate bands on a trace.
    Pipeline(PipelineArgs),
    /// Threshold diagnostics and plateau selection for one group.
    Threshold(ThresholdArgs),
    /// Fit a GPD to an exceedance file.
    Fit(FitArgs),
    /// Resampled parameter intervals for an exceedance file.
    Ci(CiArgs),
    /// Rate bands from a fit file and an interval file.
    Rate(RateArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_parser = parse_profile)]
    pub profile: Profile,
    #[arg(long, value_parser = parse_count)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// AR(1) coefficient of the latent sequence.
    #[arg(long, default_value_t = 0.0)]
    pub phi: f64,
    #[arg(long, default_value_t = DEFAULT_SAMPLE_PERIOD_MS)]
    pub period_ms: f64,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct GroupingArgs {
    /// Samples per stationarity window.
    #[arg(long, default_value_t = DEFAULT_WINDOW)]
    pub window: usize,
    /// Level in dBm separating the groups.
    #[arg(long, default_value_t = DEFAULT_LEVEL_DBM, allow_negative_numbers = true)]
    pub level: f64,
}

#[derive(Debug, Clone, Args)]
pub struct CiFlags {
    /// Significance levels, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.01, 0.5])]
    pub alpha: Vec<f64>,
    /// Number of resamples.
    #[arg(long = "M", default_value_t = 30)]
    pub iterations: usize,
    #[arg(long, value_parser = parse_resample, default_value = "bootstrap")]
    pub resample: ResampleMode,
    #[arg(long, value_parser = parse_divisor, default_value = "population")]
    pub divisor: SpreadDivisor,
}

#[derive(Debug, Clone, Args)]
pub struct RateFlags {
    /// Target packet error rate.
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    pub epsilon: f64,
    #[arg(long, value_parser = parse_reading, default_value = "conditional")]
    pub epsilon_reading: EpsilonReading,
    /// Fit units: linear (power relative to the reference), raw dBm, or db.
    #[arg(long, value_parser = parse_units, default_value = "linear")]
    pub units: FitUnits,
    /// dBm level mapped to 1 in linear units.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub reference_dbm: f64,
    /// True shape for the exact ε_n correction; needs --oracle-scale.
    #[arg(long, requires = "oracle_scale", allow_negative_numbers = true)]
    pub oracle_shape: Option<f64>,
    #[arg(long, requires = "oracle_shape")]
    pub oracle_scale: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// Trace CSV with header `t_ms,power_dbm`.
    pub input: PathBuf,
    /// Output stem: writes `<stem>.json` and `<stem>.<stage>.csv`.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub grouping: GroupingArgs,
    #[command(flatten)]
    pub ci: CiFlags,
    #[command(flatten)]
    pub rate: RateFlags,
    /// Threshold override in dBm as GROUP=DBM, e.g. 1=-5; repeatable.
    #[arg(long, value_parser = parse_override)]
    pub threshold: Vec<(GroupLabel, f64)>,
    /// Training sizes for the prefix sweep, comma separated (1e3 allowed).
    #[arg(long, value_delimiter = ',', value_parser = parse_count)]
    pub n_train: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Declustering run length; 0 keeps every exceedance.
    #[arg(long, default_value_t = DEFAULT_RUN_LENGTH)]
    pub run_length: usize,
    /// Stability rows examined together when looking for a plateau.
    #[arg(long, default_value_t = DEFAULT_PLATEAU_WINDOW)]
    pub plateau_window: usize,
}

#[derive(Debug, Args)]
pub struct ThresholdArgs {
    pub input: PathBuf,
    /// Output stem: writes `<stem>.mrl.csv` and `<stem>.stability.csv`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_parser = parse_group, default_value = "1")]
    pub group: GroupLabel,
    #[command(flatten)]
    pub grouping: GroupingArgs,
    #[arg(long, default_value_t = DEFAULT_PLATEAU_WINDOW)]
    pub plateau_window: usize,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Exceedance CSV as written by `pipeline`.
    pub input: PathBuf,
    #[arg(long, value_parser = parse_group)]
    pub group: Option<GroupLabel>,
    /// Output JSON; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CiArgs {
    pub input: PathBuf,
    #[arg(long, value_parser = parse_group)]
    pub group: Option<GroupLabel>,
    #[command(flatten)]
    pub ci: CiFlags,
    /// Resample stream seed (the report's `ci_seed` reproduces its intervals).
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RateArgs {
    /// Fit JSON as written by `fit`.
    #[arg(long)]
    pub fit: PathBuf,
    /// Interval JSON as written by `ci`.
    #[arg(long)]
    pub ci: PathBuf,
    #[command(flatten)]
    pub rate: RateFlags,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Nonnegative integer count; accepts forms such as `1e5`.
pub fn parse_count(s: &str) -> Result<usize, String> {
    if let Ok(n) = s.parse::<usize>() {
        return Ok(n);
    }
    let x: f64 = s.parse().map_err(|_| format!("{s:?} is not a count"))?;
    if !(x >= 0.0 && x.fract() == 0.0 && x <= usize::MAX as f64) {
        return Err(format!("{s:?} is not a nonnegative integer"));
    }
    Ok(x as usize)
}

fn parse_group(s: &str) -> Result<GroupLabel, String> {
    s.parse::<u8>()
        .ok()
        .and_then(|n| GroupLabel::try_from(n).ok())
        .ok_or_else(|| format!("group must be 1 or 2, got {s:?}"))
}

fn parse_override(s: &str) -> Result<(GroupLabel, f64), String> {
    let (g, u) = s.split_once('=').ok_or_else(|| format!("expected GROUP=DBM, got {s:?}"))?;
    let u: f64 = u.parse().map_err(|_| format!("threshold {u:?} is not a number"))?;
    Ok((parse_group(g)?, u))
}

fn parse_profile(s: &str) -> Result<Profile, String> {
    s.parse().map_err(|e: tailrate_core::Error| e.to_string())
}

fn parse_units(s: &str) -> Result<FitUnits, String> {
    s.parse().map_err(|e: tailrate_core::Error| e.to_string())
}

fn parse_reading(s: &str) -> Result<EpsilonReading, String> {
    s.parse().map_err(|e: tailrate_core::Error| e.to_string())
}

fn parse_resample(s: &str) -> Result<ResampleMode, String> {
    match s {
        "bootstrap" => Ok(ResampleMode::Bootstrap),
        "blocks" => Ok(ResampleMode::Blocks),
        _ => Err(format!("unknown resample mode {s:?}, expected bootstrap or blocks")),
    }
}

fn parse_divisor(s: &str) -> Result<SpreadDivisor, String> {
    match s {
        "population" => Ok(SpreadDivisor::Population),
        "sample" => Ok(SpreadDivisor::Sample),
        _ => Err(format!("unknown divisor {s:?}, expected population or sample")),
    }
}

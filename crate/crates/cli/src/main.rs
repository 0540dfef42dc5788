mod commands;
mod fail;
mod figure;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::fail::{CliError, CliResult};

/// Minority Game market laboratory: sweeps, price paths, option pricing
/// and calibration.
#[derive(Debug, Parser)]
#[command(name = "mgmarket", version)]
pub struct Cli {
    /// Directory for every output file.
    #[arg(long, global = true, env = "MGMARKET_OUT_DIR", default_value = "mgmarket-out")]
    pub out_dir: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Phase-curve sweep of σ²_N/N against the control parameter.
    Sweep(SweepArgs),
    /// One game run and its price path.
    Simulate(SimulateArgs),
    /// Risk-neutral terminal price samples, summarized.
    Terminal(TerminalArgs),
    /// European call price.
    Price(PriceArgs),
    /// Variance per unit time implied by a call price.
    Implied(ImpliedArgs),
    /// Fit w̄ and the control parameter to an option chain.
    Calibrate(CalibrateArgs),
    /// Plot data for one of the figures (1 to 8).
    Figure(FigureArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum KindArg {
    Mg,
    Gcmg,
}

#[derive(Debug, Args, serde::Serialize)]
pub struct SweepArgs {
    #[arg(long, value_enum)]
    pub kind: KindArg,
    /// Game config file supplying gamma, w, seed and activation.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// MG grid `lo:hi:count`, log-spaced in α.
    #[arg(long, default_value = "0.05:8:16")]
    pub alpha: String,
    /// MG agent count.
    #[arg(long = "N", default_value_t = 101)]
    pub n: usize,
    /// GCMG `L = P N_s`.
    #[arg(long = "L", default_value_t = 8000)]
    pub l: usize,
    /// GCMG producer density.
    #[arg(long = "np", default_value_t = 1.0)]
    pub n_p: f64,
    /// GCMG threshold ε.
    #[arg(long = "eps", default_value_t = 0.01, allow_hyphen_values = true)]
    pub epsilon: f64,
    /// GCMG speculator-density grid `lo:hi:count`, log-spaced.
    #[arg(long = "ns", default_value = "0.1:300:14")]
    pub n_s: String,
    #[arg(long, default_value_t = 8)]
    pub seeds: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub w: Option<f64>,
    /// Burn-in steps per information state.
    #[arg(long, default_value_t = 200)]
    pub burn_per_state: usize,
    /// Measured steps per information state.
    #[arg(long, default_value_t = 1000)]
    pub measure_per_state: usize,
    /// Output file stem (default derived from the kind).
    #[arg(long)]
    pub name: Option<String>,
    /// Continue from `<name>.partial.csv` if present.
    #[arg(long)]
    pub resume: bool,
    /// Run on the calling thread only.
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PathModeArg {
    Discrete,
    Continuum,
}

#[derive(Debug, Args, serde::Serialize)]
pub struct SimulateArgs {
    /// Game config file.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, value_enum, default_value = "discrete")]
    pub mode: PathModeArg,
    /// Recorded steps (discrete) or integration steps (continuum).
    #[arg(long, default_value_t = 10_000)]
    pub steps: usize,
    /// Discarded steps before recording; also the σ²_N estimation burn-in.
    #[arg(long)]
    pub burn_in: Option<usize>,
    /// Continuum step size in y-time (default 0.01/Γ).
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long, default_value_t = 100.0)]
    pub p0: f64,
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Debug, Args, serde::Serialize)]
pub struct TerminalArgs {
    #[arg(long)]
    pub spot: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub rate: f64,
    #[arg(long)]
    pub theta: f64,
    #[arg(long)]
    pub nu: f64,
    #[arg(long, default_value_t = 1_000_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Debug, Args, serde::Serialize)]
pub struct MarketArgs {
    #[arg(long)]
    pub spot: f64,
    #[arg(long)]
    pub strike: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub rate: f64,
    /// Maturity in years.
    #[arg(long)]
    pub theta: f64,
}

#[derive(Debug, Args, serde::Serialize)]
pub struct PriceArgs {
    #[command(flatten)]
    pub market: MarketArgs,
    /// Variance per unit time; otherwise built from the game parameters.
    #[arg(long)]
    pub nu: Option<f64>,
    #[arg(long, value_enum, default_value = "mg")]
    pub kind: KindArg,
    /// α or α_ns.
    #[arg(long)]
    pub control: Option<f64>,
    #[arg(long = "sigma2-N")]
    pub sigma2_n: Option<f64>,
    #[arg(long)]
    pub w: Option<f64>,
    #[arg(long = "N")]
    pub n: Option<usize>,
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Debug, Args, serde::Serialize)]
pub struct ImpliedArgs {
    #[command(flatten)]
    pub market: MarketArgs,
    /// Observed call price.
    #[arg(long)]
    pub price: f64,
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitModeArg {
    Flat,
    MaturityScaled,
}

#[derive(Debug, Args, serde::Serialize)]
pub struct CalibrateArgs {
    /// Option chain CSV.
    #[arg(long)]
    pub chain: PathBuf,
    /// Volatility index CSV.
    #[arg(long)]
    pub vol_index: PathBuf,
    /// Phase curve CSV; its sidecar is the same path with `.json`.
    #[arg(long)]
    pub curve: PathBuf,
    #[arg(long)]
    pub sidecar: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "flat")]
    pub mode: FitModeArg,
    /// Years per game step in maturity-scaled mode.
    #[arg(long, default_value_t = 0.001)]
    pub time_scale: f64,
    /// Smallest agent count in maturity-scaled mode.
    #[arg(long, default_value_t = 10)]
    pub n_min: usize,
    /// Agent count (default: the curve's).
    #[arg(long = "N")]
    pub n: Option<usize>,
    #[arg(long, default_value = "calibration")]
    pub name: String,
}

#[derive(Debug, Args, serde::Serialize)]
pub struct FigureArgs {
    /// Figure number.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=8))]
    pub id: u8,
    /// Phase curve CSV files (figure 1).
    #[arg(long = "curve")]
    pub curves: Vec<PathBuf>,
    /// Calibration result JSON files (figures 2 to 8).
    #[arg(long = "result")]
    pub results: Vec<PathBuf>,
    /// x value per result, such as M or L (figures 2 and 8).
    #[arg(long = "x", value_delimiter = ',')]
    pub xs: Vec<f64>,
    #[arg(long)]
    pub name: Option<String>,
}

/// Parse `lo:hi:count` into a log-spaced grid.
pub fn parse_grid(spec: &str, what: &str) -> CliResult<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || CliError::Usage(format!("--{what} expects lo:hi:count, got `{spec}`"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].parse().map_err(|_| bad())?;
    let count: usize = parts[2].parse().map_err(|_| bad())?;
    if !(lo > 0.0 && hi.is_finite()) || count == 0 {
        return Err(CliError::Usage(format!("--{what}: need 0 < lo and count >= 1, got `{spec}`")));
    }
    if lo > hi || (lo == hi && count > 1) {
        return Err(CliError::Usage(format!("--{what}: lo {lo} must be below hi {hi}")));
    }
    Ok(mgmarket::phase::log_grid(lo, hi, count))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mgmarket: {e}");
            e.code()
        }
    }
}

mod commands;
mod config;
mod report;
mod text;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use snpirt::estimation::StartScale;

use crate::config::Method;

#[derive(Debug, Parser)]
#[command(name = "snpirt", version, about = "Latent-normality tests for the 2PL model")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Fit SNP_0 (full or pairwise) or SNP_L to a response CSV.
    Fit(FitArgs),
    /// Test latent normality on a response CSV.
    Test(TestArgs),
    /// Run a Monte Carlo study for one latent scenario.
    Simulate(SimArgs),
    /// List the built-in latent scenarios.
    Scenarios(CommonArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// TOML file with default values for any flag.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Write the JSON report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Print the JSON report instead of text tables.
    #[arg(long)]
    pub json: bool,
    /// Record wall-clock time in the report.
    #[arg(long)]
    pub timing: bool,
    /// Worker threads; 0 uses all cores.
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct FitSettings {
    /// Response CSV: header of item names, 0/1 cells, NA or empty for missing.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// SNP degree (0, 1 or 2).
    #[arg(long = "L", short = 'L')]
    pub degree: Option<usize>,
    /// Number of L = 1 angle starts.
    #[arg(long)]
    pub starts: Option<usize>,
    /// Gauss-Hermite nodes.
    #[arg(long)]
    pub quadrature: Option<usize>,
    /// How item starts enter SNP_L fits.
    #[arg(long, value_enum)]
    pub start_scale: Option<ScaleArg>,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub fit: FitSettings,
    /// Estimator for L = 0.
    #[arg(long, value_enum)]
    pub method: Option<Method>,
}

#[derive(Debug, Clone, Args)]
pub struct TestArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub fit: FitSettings,
    /// Tests to run: ght, gh, lr, m2, ic (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub tests: Option<Vec<String>>,
    /// Information criteria: AIC, BIC, HQ.
    #[arg(long, value_delimiter = ',')]
    pub ics: Option<Vec<String>>,
    /// Nominal levels.
    #[arg(long, value_delimiter = ',')]
    pub alpha: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Args)]
pub struct SimArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Latent scenario A-E.
    #[arg(long)]
    pub scenario: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub reps: Option<usize>,
    /// Tests: GH_T1, GH_T2, LR1, LR2, M2.
    #[arg(long, value_delimiter = ',')]
    pub tests: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    pub ics: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    pub alpha: Option<Vec<f64>>,
    #[arg(long)]
    pub starts: Option<usize>,
    #[arg(long)]
    pub quadrature: Option<usize>,
    #[arg(long, value_enum)]
    pub start_scale: Option<ScaleArg>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ScaleArg {
    Direct,
    Matched,
}

impl From<ScaleArg> for StartScale {
    fn from(s: ScaleArg) -> Self {
        match s {
            ScaleArg::Direct => StartScale::Direct,
            ScaleArg::Matched => StartScale::Matched,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

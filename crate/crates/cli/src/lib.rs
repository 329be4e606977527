//! `agentsim` command-line driver.
//!
//! Exit codes: 0 success, 1 run failure, 2 usage, 3 configuration, 4 input or
//! I/O. Failures print one JSON object on one line to stderr.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use clap::{Args, Parser, Subcommand};
use error::CliError;
use serde::Serialize;
use serde_json::Value;
use std::ffi::OsString;
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(
    name = "agentsim",
    version,
    about = "Agent-based simulation engine with a lattice SIR reference model",
    arg_required_else_help = true
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one SIR realisation and write its (t, S, I, R) series.
    Simulate(SimulateArgs),
    /// Run a seeded Monte Carlo ensemble with per-run and summary outputs.
    Ensemble(EnsembleArgs),
    /// Search the transmission probability that hits a target R0.
    Calibrate(CalibrateArgs),
    /// Stationarity, equilibrium and autocovariance report for a CSV column.
    Analyze(AnalyzeArgs),
    /// Integrate the compartmental SIR equations with RK4.
    Ode(OdeArgs),
}

/// Options shared by every subcommand.
#[derive(Debug, Clone, Args, Serialize)]
pub struct Common {
    /// JSON config file (or a manifest from an earlier run); flags override it.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Output path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SirArgs {
    /// Model name (only `sir`).
    #[arg(long)]
    pub model: Option<String>,
    /// Transmission probability per infectious contact.
    #[arg(long = "b")]
    pub b: Option<f64>,
    #[arg(long)]
    pub period_min: Option<i64>,
    #[arg(long)]
    pub period_max: Option<i64>,
    #[arg(long)]
    pub contacts_min: Option<i64>,
    #[arg(long)]
    pub contacts_max: Option<i64>,
    /// global, neighborhood or network.
    #[arg(long)]
    pub contact_scheme: Option<String>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    /// von_neumann4 or moore8.
    #[arg(long)]
    pub neighborhood: Option<String>,
    /// clamp or wrap.
    #[arg(long)]
    pub boundary: Option<String>,
    /// Edge-list file, one `u v` pair per line.
    #[arg(long)]
    pub network: Option<PathBuf>,
    /// Agent id of the index case.
    #[arg(long)]
    pub initial_infected: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    #[command(flatten)]
    #[serde(flatten)]
    pub sir: SirArgs,
    #[arg(long)]
    pub steps: Option<usize>,
    /// fixed, shuffled or synchronous.
    #[arg(long)]
    pub policy: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write the final state as JSON here.
    #[arg(long)]
    pub snapshot: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EnsembleArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    #[command(flatten)]
    #[serde(flatten)]
    pub sir: SirArgs,
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub policy: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (default: available cores).
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CalibrateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    #[command(flatten)]
    #[serde(flatten)]
    pub sir: SirArgs,
    #[arg(long = "target-r0")]
    pub target_r0: Option<f64>,
    /// Runs per evaluation.
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub b_min: Option<f64>,
    #[arg(long)]
    pub b_max: Option<f64>,
    /// Accepted |estimate - target|.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_evaluations: Option<usize>,
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    /// CSV file with a header row.
    #[arg(long = "in")]
    #[serde(rename = "in")]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub column: Option<String>,
    /// Runs-test window length.
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub max_lag: Option<usize>,
    /// Shuffles for the autocovariance null band.
    #[arg(long)]
    pub permutations: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OdeArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub s0: Option<f64>,
    #[arg(long)]
    pub i0: Option<f64>,
    #[arg(long)]
    pub r0: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub horizon: Option<f64>,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Ensemble(_) => "ensemble",
            Command::Calibrate(_) => "calibrate",
            Command::Analyze(_) => "analyze",
            Command::Ode(_) => "ode",
        }
    }

    fn parts(&self) -> (&Common, Value) {
        fn v<T: Serialize>(args: &T) -> Value {
            serde_json::to_value(args).expect("plain data")
        }
        match self {
            Command::Simulate(a) => (&a.common, v(a)),
            Command::Ensemble(a) => (&a.common, v(a)),
            Command::Calibrate(a) => (&a.common, v(a)),
            Command::Analyze(a) => (&a.common, v(a)),
            Command::Ode(a) => (&a.common, v(a)),
        }
    }

    /// Resolves the configuration from `--config` and the flags.
    pub fn config(&self) -> Result<config::RunConfig, CliError> {
        let (common, flags) = self.parts();
        let file = match &common.config {
            Some(path) => Some(config::load_file(path, self.name())?),
            None => None,
        };
        let Value::Object(flags) = flags else {
            unreachable!("argument structs serialize to objects")
        };
        config::merge(self.name(), file, flags)
    }
}

/// Runs the CLI on `args` (program name first) and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match commands::execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.to_line());
            e.exit_code()
        }
    }
}

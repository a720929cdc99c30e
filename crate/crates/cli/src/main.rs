//! `fsep`: estimation, condition checks, ARE tables and contamination
//! experiments from the command line.
//!
//! Exit codes: 0 success, 1 error, 2 estimator did not converge (result still
//! written), 3 condition integral diverges.

mod commands;
mod config;
mod manifest;
mod parse;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "fsep", version, about = "Robust M-estimation under f-separable Bregman distortion measures")]
pub struct Cli {
    /// Seed for every stochastic step.
    #[arg(long, global = true, env = "FSEP_SEED", default_value_t = 0)]
    pub seed: u64,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate θ from a CSV dataset and write the result as JSON.
    Estimate(EstimateArgs),
    /// Check the unbiasedness condition integral; prints a JSON verdict.
    Check(CheckArgs),
    /// Tabulate asymptotic relative efficiency for gamma data.
    Are(AreArgs),
    /// Run a contamination experiment described by a JSON config.
    Experiment(ExperimentArgs),
    /// Draw a dataset from a model.
    Sample(SampleArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// CSV with a header row, one observation per row.
    pub input: PathBuf,
    /// sq, is or mahalanobis:FILE.
    #[arg(long, default_value = "sq")]
    pub divergence: String,
    /// lse:ALPHA, pow:BETA[,A] or linear.
    #[arg(long, allow_hyphen_values = true)]
    pub f: String,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
    /// Number of fixed-point starts.
    #[arg(long, default_value_t = 5)]
    pub starts: usize,
    /// JSON output path; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    /// 1 (elliptical), 2 (Itakura-Saito) or 4 (continuous Bregman).
    #[arg(long, value_parser = ["1", "2", "4"])]
    pub theorem: String,
    /// exp:K, gauss or student:NU[,D].
    #[arg(long)]
    pub g: String,
    #[arg(long, allow_hyphen_values = true)]
    pub f: String,
    /// Dimension for the elliptical condition.
    #[arg(long, default_value_t = 1)]
    pub dim: usize,
    /// Convex function of the continuous Bregman model: sq or neglog.
    #[arg(long, default_value = "sq")]
    pub phi: String,
}

#[derive(Debug, Args)]
pub struct AreArgs {
    /// Gamma shape.
    #[arg(long)]
    pub k: f64,
    /// START:STOP:STEP.
    #[arg(long, allow_hyphen_values = true, default_value = "0:3:0.1")]
    pub alpha_grid: String,
    /// Add β- and γ-divergence columns (k = 1 only).
    #[arg(long)]
    pub baselines: bool,
    /// CSV output path; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExperimentKind {
    LatentBias,
    SmallInlier,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(long, value_enum)]
    pub kind: ExperimentKind,
    /// JSON config file.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    /// elliptical, is or cbregman.
    #[arg(long, value_parser = ["elliptical", "is", "cbregman"])]
    pub model: String,
    #[arg(long)]
    pub g: String,
    /// Comma-separated parameter.
    #[arg(long, allow_hyphen_values = true)]
    pub theta: String,
    #[arg(long)]
    pub n: usize,
    /// Convex function for cbregman: sq or neglog.
    #[arg(long)]
    pub phi: Option<String>,
    /// Shape matrix file for elliptical models (identity by default).
    #[arg(long)]
    pub shape: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
    /// Write to this path instead of the recorded one.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Successful completion with its exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Ok,
    NotConverged,
    Divergent,
}

impl From<Outcome> for ExitCode {
    fn from(o: Outcome) -> Self {
        match o {
            Outcome::Ok => ExitCode::SUCCESS,
            Outcome::NotConverged => ExitCode::from(2),
            Outcome::Divergent => ExitCode::from(3),
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    Core(fsep_core::Error),
    Failed(String),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Failed(format!("{}: {e}", path.display()))
    }

    pub fn schema(path: &Path, e: serde_path_to_error::Error<serde_json::Error>) -> Self {
        let at = e.path().to_string();
        CliError::Failed(format!("{}: at '{at}': {}", path.display(), e.into_inner()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e) => e.fmt(f),
            CliError::Failed(s) => f.write_str(s),
        }
    }
}

impl From<fsep_core::Error> for CliError {
    fn from(e: fsep_core::Error) -> Self {
        CliError::Core(e)
    }
}

pub fn run(cli: Cli) -> Result<Outcome, CliError> {
    let seed = cli.seed;
    match cli.command {
        Command::Estimate(a) => commands::estimate(&a, seed),
        Command::Check(a) => commands::check(&a, seed),
        Command::Are(a) => commands::are(&a, seed),
        Command::Experiment(a) => commands::experiment(&a, seed),
        Command::Sample(a) => commands::sample(&a, seed),
        Command::Replay(a) => {
            let m = manifest::RunManifest::read(&a.manifest)?;
            if m.command == "replay" {
                return Err(CliError::Failed("a manifest cannot replay a replay".into()));
            }
            let args = std::iter::once("fsep".to_string()).chain(m.replay_args(a.out.as_deref()));
            let cli = Cli::try_parse_from(args).map_err(|e| CliError::Failed(format!("manifest arguments: {e}")))?;
            run(cli)
        }
    }
}

fn main() -> ExitCode {
    // clap exits with 2 on usage errors, which would collide with the
    // non-convergence status.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::FAILURE } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(outcome) => outcome.into(),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

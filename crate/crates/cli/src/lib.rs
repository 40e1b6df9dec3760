//! Command-line pipelines over the `evgaze` toolkit.
//!
//! Every subcommand reads one JSON config (see [`config`]) and is
//! deterministic given the config and seed, apart from wall-clock columns.
//! Failures map onto fixed exit codes listed in [`error`].

pub mod cmd;
pub mod config;
pub mod error;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::cmd::eval::EvalArgs;
use crate::config::PipelineConfig;
use crate::error::{CliError, Result, EXIT_CONFIG, EXIT_OK, EXIT_THRESHOLD};

/// Environment variable capping the worker pool size.
pub const THREADS_ENV: &str = "EVGAZE_THREADS";

#[derive(Debug, Parser)]
#[command(name = "evgaze", version, about = "Event-camera eye tracking pipelines")]
pub struct Cli {
    /// Pipeline config (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize an events CSV and a labels CSV.
    Generate,
    /// Apply the configured augmentation ops to an events CSV.
    Augment,
    /// Cut events into windows and write one tensor file per window.
    Represent,
    /// Run a model over represented windows and write predictions.
    Infer {
        /// Run the whole sequence at once instead of frame by frame.
        #[arg(long)]
        offline: bool,
    },
    /// Centroid-tracker predictions at the label times.
    Track,
    /// Score predictions against labels.
    Eval {
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Where to write the JSON report.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Skip rows labelled as blinks.
        #[arg(long)]
        exclude_blinks: bool,
        /// Exit with status 5 when p10 falls below this.
        #[arg(long)]
        min_p10: Option<f64>,
    },
    /// Dense versus sparse streaming latency and MACs per frame.
    Bench,
}

/// What the binary prints and the status it exits with.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub stdout: String,
    pub code: u8,
}

impl Outcome {
    fn ok(s: impl ToString) -> Self {
        Outcome {
            stdout: s.to_string(),
            code: EXIT_OK,
        }
    }
}

fn load_config(cli: &Cli, required: bool) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None if required => return Err(CliError::config("--config is required for this command")),
        None => PipelineConfig::from_json(r#"{"version": 1}"#, "".as_ref())?,
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

pub fn execute(cli: &Cli) -> Result<Outcome> {
    let needs_config = !matches!(cli.command, Command::Eval { .. });
    let cfg = load_config(cli, needs_config)?;
    Ok(match &cli.command {
        Command::Generate => Outcome::ok(cmd::generate::run(&cfg)?),
        Command::Augment => Outcome::ok(cmd::augment::run(&cfg)?),
        Command::Represent => Outcome::ok(cmd::represent::run(&cfg)?),
        Command::Infer { offline } => Outcome::ok(cmd::infer::run(&cfg, *offline)?),
        Command::Track => Outcome::ok(cmd::track::run(&cfg)?),
        Command::Eval {
            predictions,
            labels,
            report,
            exclude_blinks,
            min_p10,
        } => {
            let args = EvalArgs {
                predictions: predictions.clone(),
                labels: labels.clone(),
                report: report.clone(),
                exclude_blinks: *exclude_blinks,
                min_p10: *min_p10,
            };
            let out = cmd::eval::run(&cfg, &args)?;
            Outcome {
                code: if out.passed() { EXIT_OK } else { EXIT_THRESHOLD },
                stdout: out.to_string(),
            }
        }
        Command::Bench => Outcome::ok(cmd::bench::run(&cfg)?),
    })
}

/// Worker count from [`THREADS_ENV`]; `None` leaves the pool default.
pub fn threads_from_env(value: Option<&str>) -> Result<Option<usize>> {
    match value {
        None => Ok(None),
        Some(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::new(
                EXIT_CONFIG,
                format!("{THREADS_ENV} must be a positive integer, got `{v}`"),
            )),
        },
    }
}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/cli.md")]
mod guide {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thread_env_parsing() {
        assert_eq!(threads_from_env(None), Ok(None));
        assert_eq!(threads_from_env(Some("3")), Ok(Some(3)));
        assert_eq!(threads_from_env(Some("0")).unwrap_err().code, 1);
        assert_eq!(threads_from_env(Some("many")).unwrap_err().code, 1);
    }

    #[test]
    fn clap_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}

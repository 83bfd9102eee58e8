//! Library behind the `bbmd` binary: config, dataset ingestion, the analysis
//! commands and their report and plot-data outputs.

pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod plots;
pub mod report;

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::commands::FamilyChoice;
use crate::config::RunConfig;
use crate::error::{exit, CliError};

#[derive(Debug, Parser)]
#[command(name = "bbmd", version, about = "Bayesian benchmark-dose analysis for quantal data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve prior parameters from expert quartiles.
    Elicit(ElicitArgs),
    /// Fit the configured models and write BMD estimates.
    Fit(RunArgs),
    /// Run the epsilon-contamination sensitivity study.
    Sensitivity(RunArgs),
    /// Fit two or more models and report Bayes factors.
    Compare(RunArgs),
}

#[derive(Debug, Args)]
pub struct ElicitArgs {
    /// Lower quartile and median of the BMD on the scaled dose axis.
    #[arg(long, num_args = 2, value_names = ["Q1", "Q2"])]
    pub xi: Option<Vec<f64>>,
    /// Lower quartile and median of the background risk.
    #[arg(long, num_args = 2, value_names = ["Q1", "Q2"])]
    pub gamma0: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value = "both")]
    pub family: FamilyChoice,
    /// Print JSON instead of a table.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// TOML run configuration.
    #[arg(long, short)]
    pub config: PathBuf,
    /// Override the sampler seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the chain length.
    #[arg(long)]
    pub chain_length: Option<usize>,
    /// Override the output directory.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Write every chain to CSV.
    #[arg(long)]
    pub export_chain: bool,
}

impl RunArgs {
    fn load(&self) -> Result<RunConfig, CliError> {
        let mut config = RunConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            config.sampler.seed = seed;
        }
        if let Some(n) = self.chain_length {
            config.sampler.chain_length = n;
        }
        if let Some(dir) = &self.output {
            config.output_dir = dir.clone();
        }
        config.export_chain |= self.export_chain;
        config.validate()?;
        Ok(config)
    }
}

fn pair(v: Option<Vec<f64>>) -> Option<[f64; 2]> {
    v.map(|v| [v[0], v[1]])
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { exit::OK };
            let _ = if e.use_stderr() {
                write!(err, "{}", e.render())
            } else {
                write!(out, "{}", e.render())
            };
            return code;
        }
    };
    let finish = |o: commands::Outcome, err: &mut dyn Write| {
        if let Some(msg) = o.report.as_ref().and_then(|r| r.message.as_ref()) {
            let _ = writeln!(err, "error: {msg}");
        }
        o.exit_code
    };
    let result = match cli.command {
        Command::Elicit(a) => commands::cmd_elicit(pair(a.xi), pair(a.gamma0), a.family, a.json, out),
        Command::Fit(a) => a.load().and_then(|c| commands::cmd_fit(&c, out)),
        Command::Sensitivity(a) => a.load().and_then(|c| commands::cmd_sensitivity(&c, out)),
        Command::Compare(a) => a.load().and_then(|c| commands::cmd_compare(&c, out)),
    }
    .map(|o| finish(o, err));
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

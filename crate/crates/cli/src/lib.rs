//! Command-line front end: synthetic data, training, sampling, the r-sweep
//! and evaluation.

pub mod commands;
pub mod config;

use std::ffi::OsString;

use anyhow::Result;
use clap::{Parser, Subcommand};

use commands::{eval::EvalArgs, gen_data::GenDataArgs, sample::SampleArgs, sweep::SweepArgs, train::TrainArgs};

#[derive(Debug, Parser)]
#[command(name = "sdesr", version, about = "Score-based diffusion super-resolution")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write synthetic grayscale faces.
    GenData(GenDataArgs),
    /// Train a conditional denoiser.
    Train(TrainArgs),
    /// Super-resolve images.
    Sample(SampleArgs),
    /// Sweep the Langevin signal-to-noise ratio.
    SweepR(SweepArgs),
    /// Compute metrics for SR images.
    Eval(EvalArgs),
}

impl Command {
    pub fn run(&self) -> Result<()> {
        match self {
            Command::GenData(a) => commands::gen_data::run(a),
            Command::Train(a) => commands::train::run(a),
            Command::Sample(a) => commands::sample::run(a),
            Command::SweepR(a) => commands::sweep::run(a).map(|_| ()),
            Command::Eval(a) => commands::eval::run(a).map(|_| ()),
        }
    }
}

/// Parse `args` (including the program name), expanding `--config FILE`.
pub fn parse(args: Vec<OsString>) -> Result<Cli> {
    let args = config::expand_config_args(args)?;
    Ok(Cli::try_parse_from(args)?)
}

/// Parse and run; the entry point of the binary and of tests.
pub fn run_from<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    parse(args.into_iter().map(Into::into).collect())?.command.run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn later_flags_win() {
        let cli = parse(
            ["sdesr", "sample", "--checkpoint", "c", "--out-dir", "o", "--n", "10", "--n", "20"]
                .iter()
                .map(OsString::from)
                .collect(),
        )
        .unwrap();
        let Command::Sample(a) = cli.command else { panic!() };
        assert_eq!(a.n, 20);
    }
}

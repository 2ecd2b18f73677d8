//! Command-line front end: argument and config handling, the subcommands and
//! CSV output.

pub mod checks;
pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod sim;

use std::ffi::OsString;

use clap::Parser;

use crate::config::{Cli, ExperimentConfig};
use crate::error::CliError;

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let mut cfg = ExperimentConfig::from_command(cli.command)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| CliError::usage(format!("cannot start {} workers: {e}", cfg.workers)))?;
    let report = pool.install(|| commands::run(&mut cfg))?;
    let bytes = report.table.render(&cfg.echo())?;
    output::emit(&bytes, cfg.out.as_deref())?;
    match report.failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

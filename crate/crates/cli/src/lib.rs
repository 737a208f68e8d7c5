//! Command-line front end for `clickstat`.
//!
//! Every subcommand writes CSV tables and versioned JSON reports into
//! `--out-dir`. Exit codes: 0 success, 2 invalid input, 3 numerical or fit
//! failure, 4 I/O failure.

mod args;
mod commands;
mod config;
mod error;
mod io;

use std::ffi::OsString;

use clap::Parser;

pub use args::Cli;
pub use error::CliError;
pub use io::SCHEMA_VERSION;

use args::Command;

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, T>(args: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let args = config::expand(args.into_iter().map(Into::into).collect())?;
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            e.print().map_err(|e| CliError::Io(e.to_string()))?;
            return Ok(());
        }
        Err(e) => {
            // keep the diagnostic, drop the usage block, on one line
            let rendered = e.to_string();
            let msg: Vec<&str> = rendered
                .lines()
                .map(str::trim)
                .take_while(|l| !l.starts_with("Usage:"))
                .filter(|l| !l.is_empty())
                .collect();
            return Err(CliError::Validation(
                msg.join(" ").trim_start_matches("error: ").to_string(),
            ));
        }
    };
    match cli.threads {
        Some(0) => Err(CliError::Validation("--threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Io(format!("cannot start worker threads: {e}")))?
            .install(|| dispatch(&cli.command)),
        None => dispatch(&cli.command),
    }
}

fn dispatch(command: &Command) -> Result<(), CliError> {
    match command {
        Command::Model(a) => commands::model(a),
        Command::Simulate(a) => commands::simulate_cmd(a),
        Command::Fit(a) => commands::fit(a),
        Command::CalibrateCrosstalk(a) => commands::calibrate(a),
        Command::Qscan(a) => commands::qscan(a),
        Command::Invert(a) => commands::invert(a),
    }
}

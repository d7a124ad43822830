//! `appgrowth`: batch CLI over the analytics library.
//!
//! Every run takes a subcommand, an output directory and a seed, echoes its
//! fully resolved configuration to `<out>/run_config.json`, and writes its
//! artifacts into the output directory. Identical inputs, configuration and
//! seed produce byte-identical outputs.
//!
//! Exit codes: 0 ok, 1 computation error, 2 I/O error, 3 configuration
//! error. Failures print one machine-parseable line to stderr:
//! `E<code>: <message>`.

mod args;
mod commands;
mod error;
mod out;

use clap::Parser;

use crate::error::CliError;

fn main() {
    let code = match try_run() {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("E{}: {}", e.code(), e.message().replace('\n', " "));
            e.code()
        }
    };
    std::process::exit(code);
}

fn try_run() -> Result<(), CliError> {
    let cli = args::Cli::try_parse().map_err(|e| {
        // clap usage problems are configuration errors; --help/--version are
        // not errors at all.
        use clap::error::ErrorKind;
        match e.kind() {
            ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                print!("{e}");
                std::process::exit(0);
            }
            _ => CliError::Config(e.to_string()),
        }
    })?;
    commands::dispatch(cli)
}

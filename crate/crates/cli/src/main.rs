//! `densekit` command-line front end.

mod args;
mod commands;
mod config;

use std::ffi::OsString;
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches};

use args::Cli;

fn error_code(err: &anyhow::Error) -> &'static str {
    err.chain().find_map(|e| e.downcast_ref::<densekit::Error>()).map_or("E_CLI", densekit::Error::code)
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn parse(raw: Vec<OsString>) -> Result<Cli, ExitCode> {
    let raw = match config::inject(raw) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error[E_INVALID_CONFIG]: {}", one_line(&format!("{e:#}")));
            return Err(ExitCode::from(2));
        }
    };
    let cmd = Cli::command().args_override_self(true).mut_subcommands(|s| s.args_override_self(true));
    match cmd.try_get_matches_from(raw).and_then(|m| Cli::from_arg_matches(&m)) {
        Ok(cli) => Ok(cli),
        Err(e) if !e.use_stderr() => {
            // --help / --version
            let _ = e.print();
            Err(ExitCode::SUCCESS)
        }
        Err(e) => {
            let text = e.render().to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            eprintln!("error[E_USAGE]: {}", one_line(first.trim_start_matches("error:")));
            Err(ExitCode::from(2))
        }
    }
}

fn main() -> ExitCode {
    let cli = match parse(std::env::args_os().collect()) {
        Ok(c) => c,
        Err(code) => return code,
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {}", error_code(&e), one_line(&format!("{e:#}")));
            ExitCode::FAILURE
        }
    }
}

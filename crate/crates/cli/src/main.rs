//! `opmode`: command-line front end for operation-mode discovery.

mod args;
mod commands;
mod tables;

use std::ffi::OsString;

use clap::Parser;
use log::{error, LevelFilter};

use args::{Cli, Command};

fn run<I: IntoIterator<Item = OsString>>(argv: I) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => LevelFilter::Error,
        (false, 0) => LevelFilter::Info,
        (false, 1) => LevelFilter::Debug,
        _ => LevelFilter::Trace,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .init();

    let result = match &cli.command {
        Command::Fit(a) => commands::fit(a),
        Command::Assign(a) => commands::assign(a),
        Command::Update(a) => commands::update(a),
        Command::Explain(a) => commands::explain(a),
        Command::Kdist(a) => commands::kdist(a),
        Command::Scree(a) => commands::scree(a),
        Command::Synth(a) => commands::synth(a),
        Command::Report(a) => commands::report(a),
    };
    match result {
        Ok(()) => 0,
        Err(f) => {
            error!("{f}");
            f.exit_code()
        }
    }
}

fn main() {
    std::process::exit(run(std::env::args_os()));
}

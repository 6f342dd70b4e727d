//! `riskaudit`: audit decile risk scores for calibration, error-rate
//! balance and penalty disparities across groups.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 usage or configuration error,
//! 3 parse or schema error, 4 empty slice or degenerate data.

mod args;
mod commands;
mod meta;
mod output;
mod svg;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

pub const EXIT_IO: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_PARSE: u8 = 3;
pub const EXIT_DEGENERATE: u8 = 4;

/// An error carrying the exit code it should produce.
#[derive(Debug)]
pub struct Coded {
    pub code: u8,
    pub message: String,
}

impl std::fmt::Display for Coded {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Coded {}

pub fn usage(message: impl Into<String>) -> anyhow::Error {
    Coded {
        code: EXIT_USAGE,
        message: message.into(),
    }
    .into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(c) = cause.downcast_ref::<Coded>() {
            return c.code;
        }
        if let Some(e) = cause.downcast_ref::<riskaudit::Error>() {
            return match e.category() {
                riskaudit::ErrorCategory::Io => EXIT_IO,
                riskaudit::ErrorCategory::Config => EXIT_USAGE,
                riskaudit::ErrorCategory::Parse => EXIT_PARSE,
                riskaudit::ErrorCategory::Degenerate => EXIT_DEGENERATE,
            };
        }
        if cause.downcast_ref::<toml::de::Error>().is_some() {
            return EXIT_USAGE;
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return EXIT_IO;
        }
    }
    EXIT_IO
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(cli.verbosity())
        .format_timestamp(None)
        .init();

    let result = match &cli.command {
        Command::Audit(a) => commands::audit(a),
        Command::Calibration(a) => commands::calibration(a),
        Command::Impact(a) => commands::impact(a),
        Command::Figures(a) => commands::figures(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::IdentityCheck(a) => commands::identity_check(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

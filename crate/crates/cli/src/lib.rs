//! Library surface of the `leecarter` CLI: argument handling, file
//! formats, and the subcommand implementations, exported so integration
//! tests can drive them directly.

pub mod args;
pub mod commands;
pub mod formats;
pub mod manifest;
pub mod parallel;

/// Failures split along the exit-code contract: usage/validation errors
/// exit 2, runtime failures exit 1.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for CliError {}

/// Dispatch a parsed command line.
pub fn run(cli: args::Cli) -> Result<(), CliError> {
    match cli.command {
        args::Command::Fit(a) => commands::cmd_fit(a),
        args::Command::Bootstrap(a) => commands::cmd_bootstrap(a),
        args::Command::Detect(a) => commands::cmd_detect(a),
        args::Command::Simulate(a) => commands::cmd_simulate(a),
    }
}

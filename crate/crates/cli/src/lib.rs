//! Command-line front end: CSV fits, cross-validation of the spline
//! degrees of freedom, Monte Carlo studies and the synthetic fixture.

pub mod args;
pub mod commands;
pub mod cv;
pub mod data;
pub mod error;
pub mod fixture;
pub mod output;
pub mod pipeline;

pub use error::CliError;

use args::{Cli, Command};

/// Dispatches a parsed command line.
pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Fit(a) => commands::cmd_fit(a),
        Command::Simulate(a) => commands::cmd_simulate(a),
        Command::Cv(a) => commands::cmd_cv(a),
        Command::Fixture(a) => commands::cmd_fixture(a),
    }
}

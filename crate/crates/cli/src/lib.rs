//! Command-line front end for `npiv-core`.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 empty
//! identified set (the result document is still written), 5 numerical failure.

pub mod args;
pub mod commands;
pub mod data;
pub mod error;
pub mod report;

use args::{Cli, Command};
use commands::Outcome;
use error::{CliError, EXIT_INFEASIBLE, EXIT_OK};

pub fn run(cli: &Cli) -> Result<Outcome, CliError> {
    match &cli.command {
        Command::Estimate(a) => commands::run_estimate(a),
        Command::ReducedForm(a) => commands::run_reduced_form(a),
        Command::Simulate(a) => commands::run_simulate(a),
        Command::Oracle(a) => commands::run_oracle(a),
        Command::Bias(a) => commands::run_bias(a),
    }
}

pub fn exit_code(result: &Result<Outcome, CliError>) -> i32 {
    match result {
        Ok(Outcome::Ok) => EXIT_OK,
        Ok(Outcome::Infeasible) => EXIT_INFEASIBLE,
        Err(e) => e.exit_code(),
    }
}

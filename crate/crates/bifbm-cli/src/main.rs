// Validations use the `!(x > 0.0)` form on purpose: unlike `x <= 0.0`,
// it sends NaN down the rejection path.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod run;

use clap::Parser;
use std::process::ExitCode;

fn main() -> ExitCode {
    // try_parse + exit keeps clap's contract: usage errors exit 2 with the
    // message on stderr, --help and --version exit 0.
    let cli = match config::Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match run::dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}

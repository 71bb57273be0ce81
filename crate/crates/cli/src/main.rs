use std::process::ExitCode;

use clap::Parser;
use splineband_cli::args::Cli;
use splineband_cli::error::EXIT_OK;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match splineband_cli::run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}

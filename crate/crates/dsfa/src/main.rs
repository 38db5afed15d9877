use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = dsfa::cli::Cli::parse();
    match dsfa::cli::run(cli) {
        Ok(outcome) => ExitCode::from(outcome.exit_code()),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(1)
        }
    }
}

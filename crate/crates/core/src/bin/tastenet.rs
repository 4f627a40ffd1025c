use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use tastenet::cli::{error_json, run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(summary) => {
            let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
            let _ = writeln!(std::io::stdout(), "{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", error_json(cli.command.name(), &e));
            ExitCode::FAILURE
        }
    }
}

use std::process::ExitCode;

use clap::Parser;
use porofeti_cli::args::Cli;
use porofeti_cli::commands::{run, CliError};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, flags) = cli.command.split();
    let result = flags.resolve().map_err(CliError::from).and_then(|cfg| {
        eprint!("{}", cfg.emit());
        run(command, &cfg)
    });
    match result {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

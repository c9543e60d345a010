mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;

use args::{config_args, config_path, insertion_point, Cli};
use commands::CliError;

fn main() -> ExitCode {
    let mut argv: Vec<_> = std::env::args_os().collect();
    if let Some(path) = config_path(&argv) {
        let extra = std::fs::read_to_string(&path)
            .map_err(|e| format!("{}: {e}", path.display()))
            .and_then(|text| config_args(&text));
        match (extra, insertion_point(&argv)) {
            (Ok(extra), Some(at)) => {
                argv.splice(at..at, extra);
            }
            (Err(e), _) => return fail(&CliError::Config(e)),
            (Ok(_), None) => {}
        }
    }
    let cli = Cli::parse_from(argv);
    match commands::run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}

fn fail(e: &CliError) -> ExitCode {
    eprintln!("epsrd: {e}");
    ExitCode::from(e.exit_code() as u8)
}

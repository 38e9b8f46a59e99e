use std::process::ExitCode;

use augbench_cli::error::{EXIT_OK, EXIT_USAGE};
use augbench_cli::{run, Cli};
use clap::Parser;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { EXIT_OK } as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("augbench: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

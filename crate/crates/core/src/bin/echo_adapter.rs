//! Built-in reference adapter: answers every predict record with the
//! majority training label. Flags inject protocol faults for testing.
//!
//! Flags: --omit-first --duplicate-first --unknown-label --exit-code N --sleep-ms N

use std::io::{self, Read};
use std::process::ExitCode;
use std::time::Duration;

use augbench_core::classify::adapter::{echo_session, write_error_line, EchoOptions};

fn parse_args() -> Result<EchoOptions, String> {
    let mut options = EchoOptions::default();
    let mut args = std::env::args().skip(1);
    while let Some(arg) = args.next() {
        let mut value = |name: &str| {
            args.next()
                .and_then(|v| v.parse::<u64>().ok())
                .ok_or_else(|| format!("{name} needs a non-negative integer"))
        };
        match arg.as_str() {
            "--omit-first" => options.omit_first = true,
            "--duplicate-first" => options.duplicate_first = true,
            "--unknown-label" => options.unknown_label = true,
            "--exit-code" => options.exit_code = Some(value("--exit-code")? as i32),
            "--sleep-ms" => options.sleep = Some(Duration::from_millis(value("--sleep-ms")?)),
            other => return Err(format!("unknown flag `{other}`")),
        }
    }
    Ok(options)
}

fn main() -> ExitCode {
    let options = match parse_args() {
        Ok(o) => o,
        Err(e) => {
            eprintln!("augbench-echo-adapter: {e}");
            return ExitCode::from(2);
        }
    };
    let mut input = Vec::new();
    if let Err(e) = io::stdin().read_to_end(&mut input) {
        eprintln!("augbench-echo-adapter: {e}");
        return ExitCode::FAILURE;
    }
    match echo_session(&input[..], &options) {
        Ok(out) => {
            print!("{out}");
            match options.exit_code {
                Some(code) => ExitCode::from(code as u8),
                None => ExitCode::SUCCESS,
            }
        }
        Err(e) => {
            let _ = write_error_line(io::stdout(), &e);
            eprintln!("augbench-echo-adapter: {e}");
            ExitCode::FAILURE
        }
    }
}

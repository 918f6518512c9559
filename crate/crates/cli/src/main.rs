use std::process::ExitCode;

use bmpaw_cli::{execute, Cli};
use clap::Parser;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli.command) {
        Ok(outcome) => {
            print!("{}", outcome.report);
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

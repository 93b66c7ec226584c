use std::process::ExitCode;

use clap::Parser;
use tracing_subscriber::EnvFilter;

use kgsynth::{run, Cli};

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(outcome) => {
            print!("{}", outcome.report);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("kgsynth: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

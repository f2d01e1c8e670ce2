use clap::Parser;

use blindsr::harness::cli::{run_cli, Cli};
use blindsr::harness::exit_code;

fn main() {
    let cli = Cli::parse();
    let code = match run_cli(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    };
    std::process::exit(code);
}

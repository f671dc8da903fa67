use clap::Parser;
use packing_sim::harness::cli::{run_cli, Cli};

fn main() {
    let code = match run_cli(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    };
    std::process::exit(code);
}
